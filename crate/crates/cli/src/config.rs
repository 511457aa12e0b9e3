use std::path::PathBuf;
use std::str::FromStr;

use cknn::kernel::Smoothness;
use cknn::recovery::RecoveryMethod;
use cknn::{Error, Method, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Chol,
    Gp,
    Cg,
    Recover,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Chol => "chol",
            Experiment::Gp => "gp",
            Experiment::Cg => "cg",
            Experiment::Recover => "recover",
        }
    }

    pub fn default_methods(self) -> Vec<String> {
        let names: &[&str] = match self {
            Experiment::Chol => &["rho_ball", "knn", "select", "select_agg"],
            Experiment::Gp => &["rho_ball", "knn", "select", "rho_ball_agg", "select_agg"],
            Experiment::Cg => &["rho_ball", "knn", "select"],
            Experiment::Recover => &["cknn", "corr", "knn", "random"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    /// Maximin order used when none is given.
    pub fn default_p(self) -> usize {
        match self {
            Experiment::Gp | Experiment::Cg => 2,
            Experiment::Chol | Experiment::Recover => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Regular grid with cell centers `(i + 0.5)/m`, jittered by `U(−δ, δ)`.
    GridPerturbed { delta: f64 },
    UniformCube,
    /// Leading rows of a CSV file, optionally restricted to some columns.
    Csv { path: PathBuf, columns: Option<Vec<usize>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    N,
    Rho,
    S,
    Noise,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::N => "n",
            SweepParam::Rho => "rho",
            SweepParam::S => "s",
            SweepParam::Noise => "noise",
        }
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" => Ok(SweepParam::N),
            "rho" => Ok(SweepParam::Rho),
            "s" => Ok(SweepParam::S),
            "noise" | "sigma2" => Ok(SweepParam::Noise),
            _ => Err(Error::InvalidParameter(format!("unknown sweep parameter {s:?}"))),
        }
    }
}

/// A sweep written as `param=v1,v2,...`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (param, values) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidParameter(format!("sweep {s:?} is not of the form param=v1,v2")))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::InvalidParameter(format!("sweep value {v:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep {
            param: param.trim().parse()?,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub geometry: Geometry,
    pub n: usize,
    pub dim: usize,
    pub smoothness: Smoothness,
    pub length_scale: f64,
    pub nugget: f64,
    pub rho: f64,
    pub rho_s: f64,
    pub lambda: f64,
    pub k: Option<usize>,
    pub p: usize,
    pub methods: Vec<String>,
    pub sweep: Sweep,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub parallel: bool,
    /// Prediction points (gp).
    pub m: usize,
    /// Prior draws per instance (gp).
    pub realizations: usize,
    /// Interval level for coverage (gp).
    pub level: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Planted entries per column (recover).
    pub s: usize,
    /// Noise variance (recover).
    pub noise: f64,
    pub diag_value: f64,
    /// Also write each factor as triplets (chol).
    pub save_factors: bool,
}

impl ExperimentConfig {
    /// Defaults for one experiment, sweeping `n` over the single value `n`.
    pub fn new(experiment: Experiment, out_dir: impl Into<PathBuf>) -> Self {
        let (n, dim, smoothness, geometry) = match experiment {
            Experiment::Chol => (1024, 2, Smoothness::FiveHalves, Geometry::GridPerturbed { delta: 1e-2 }),
            Experiment::Gp => (1024, 3, Smoothness::ThreeHalves, Geometry::UniformCube),
            Experiment::Cg => (4096, 3, Smoothness::Half, Geometry::UniformCube),
            Experiment::Recover => (256, 2, Smoothness::Half, Geometry::UniformCube),
        };
        ExperimentConfig {
            experiment,
            geometry,
            n,
            dim,
            smoothness,
            length_scale: 1.0,
            nugget: 0.0,
            rho: 2.0,
            rho_s: 2.0,
            lambda: 1.5,
            k: None,
            p: experiment.default_p(),
            methods: experiment.default_methods(),
            sweep: Sweep {
                param: SweepParam::N,
                values: vec![n as f64],
            },
            seeds: vec![0],
            out_dir: out_dir.into(),
            parallel: false,
            m: 128,
            realizations: 1000,
            level: 0.9,
            tol: 1e-12,
            max_iter: 10_000,
            s: 32,
            noise: 0.0,
            diag_value: 10.0,
            save_factors: false,
        }
    }

    pub fn factor_methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn recovery_methods(&self) -> Result<Vec<RecoveryMethod>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.methods.is_empty() {
            return bad("at least one method is required".into());
        }
        if self.sweep.values.is_empty() || self.sweep.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad(format!("sweep values must be strictly increasing: {:?}", self.sweep.values));
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            return bad("sweep values must be finite".into());
        }
        let integral = matches!(self.sweep.param, SweepParam::N | SweepParam::S);
        if integral && self.sweep.values.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
            return bad(format!("{} sweep values must be nonnegative integers", self.sweep.param.name()));
        }
        match self.experiment {
            Experiment::Recover => {
                self.recovery_methods()?;
                if matches!(self.sweep.param, SweepParam::Rho) {
                    return bad("the recover experiment cannot sweep rho".into());
                }
            }
            _ => {
                self.factor_methods()?;
                if matches!(self.sweep.param, SweepParam::S | SweepParam::Noise) {
                    return bad(format!(
                        "the {} experiment cannot sweep {}",
                        self.experiment.name(),
                        self.sweep.param.name()
                    ));
                }
            }
        }
        if self.dim == 0 || !(self.length_scale > 0.0) || !(self.nugget >= 0.0) {
            return bad("need dim ≥ 1, a positive length scale and a nonnegative nugget".into());
        }
        if let Geometry::GridPerturbed { delta } = self.geometry {
            if !(delta >= 0.0) {
                return bad(format!("grid perturbation must be nonnegative, got {delta}"));
            }
        }
        if self.experiment == Experiment::Gp && (self.m == 0 || self.realizations == 0) {
            return bad("gp needs prediction points and realizations".into());
        }
        if !(self.level > 0.0 && self.level < 1.0) || !(self.tol > 0.0) {
            return bad("need 0 < level < 1 and a positive tolerance".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sweeps() {
        let s: Sweep = "rho=2,3,4".parse().unwrap();
        assert_eq!(s.param, SweepParam::Rho);
        assert_eq!(s.values, vec![2.0, 3.0, 4.0]);
        assert!("rho".parse::<Sweep>().is_err());
        assert!("x=1".parse::<Sweep>().is_err());
        assert!("n=1,a".parse::<Sweep>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::new(Experiment::Chol, "out");
        assert!(c.validate().is_ok());
        c.sweep.values = vec![2.0, 2.0];
        assert!(c.validate().is_err());
        c.sweep.values = vec![1.5];
        assert!(c.validate().is_err());
        c.sweep = "rho=2,3".parse().unwrap();
        assert!(c.validate().is_ok());
        c.seeds.clear();
        assert!(c.validate().is_err());

        let mut r = ExperimentConfig::new(Experiment::Recover, "out");
        assert!(r.validate().is_ok());
        r.methods = vec!["select".into()];
        assert!(r.validate().is_err());
        r = ExperimentConfig::new(Experiment::Recover, "out");
        r.sweep = "rho=2".parse().unwrap();
        assert!(r.validate().is_err());
    }
}
