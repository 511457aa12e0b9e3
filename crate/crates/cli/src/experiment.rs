use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use cknn::gp::{JointFactor, SyntheticSuite};
use cknn::kernel::Covariance;
use cknn::metrics::{kl_factor, DENSE_CAP};
use cknn::pcg::{pcg_solve, LinearOperator};
use cknn::recovery::{evaluate, plant_factor, RecoveryConfig};
use cknn::{factorize, Error, FactorParams, KernelCovariance, KernelSpec, PointSet, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{Experiment, ExperimentConfig, Geometry, SweepParam};
use crate::geometry::{grid_perturbed, ingest_points, uniform_cube};

/// Metric names per experiment, in output order.
pub fn metric_names(experiment: Experiment) -> &'static [&'static str] {
    match experiment {
        Experiment::Chol => &["kl", "nnz", "time", "time_ordering", "time_selection", "time_entries"],
        Experiment::Gp => &["rmse", "rmse_truth", "coverage", "logdet", "nnz", "time", "time_solve"],
        Experiment::Cg => &["iterations", "converged", "nnz", "time", "time_solve"],
        Experiment::Recover => &["iou", "kl", "aborted"],
    }
}

/// Timing outputs vary between runs; everything else is reproducible.
pub fn is_timing_metric(name: &str) -> bool {
    name.starts_with("time")
}

/// One metric row per method for one (sweep value, seed).
type InstanceResult = Vec<Vec<f64>>;

/// The configuration of a single sweep point.
fn at_sweep(config: &ExperimentConfig, value: f64) -> ExperimentConfig {
    let mut c = config.clone();
    match config.sweep.param {
        SweepParam::N => c.n = value as usize,
        SweepParam::Rho => c.rho = value,
        SweepParam::S => c.s = value as usize,
        SweepParam::Noise => c.noise = value,
    }
    c
}

fn instance_rng(config: &ExperimentConfig, seed: u64) -> ChaCha8Rng {
    // the stream depends on N only, so sweeps over other parameters reuse
    // the same points
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(config.n as u64);
    rng
}

fn build_points<R: Rng + ?Sized>(config: &ExperimentConfig, n: usize, rng: &mut R) -> Result<PointSet> {
    match &config.geometry {
        Geometry::GridPerturbed { delta } => grid_perturbed(n, config.dim, *delta, rng),
        Geometry::UniformCube => uniform_cube(n, config.dim, rng),
        Geometry::Csv { path, columns } => {
            let all = ingest_points(path, columns.as_deref())?.points;
            if all.len() < n {
                return Err(Error::InvalidParameter(format!(
                    "{} holds {} distinct points, {n} needed",
                    path.display(),
                    all.len()
                )));
            }
            Ok(all.select(&(0..n).collect::<Vec<_>>()))
        }
    }
}

fn kernel(config: &ExperimentConfig) -> KernelSpec {
    KernelSpec::matern(config.smoothness, config.length_scale).with_nugget(config.nugget)
}

fn factor_params(config: &ExperimentConfig) -> FactorParams {
    FactorParams {
        rho: config.rho,
        rho_s: config.rho_s,
        lambda: config.lambda,
        k: config.k,
        p: config.p,
        seed: None,
        total_nnz: None,
    }
}

fn nan_row(config: &ExperimentConfig) -> Vec<f64> {
    vec![f64::NAN; metric_names(config.experiment).len()]
}

/// Runs `f` for every method, logging failures as rows of NaN.
fn per_method<T>(
    config: &ExperimentConfig,
    methods: &[T],
    label: &str,
    mut f: impl FnMut(&T) -> Result<Vec<f64>>,
) -> InstanceResult
where
    T: std::fmt::Display,
{
    methods
        .iter()
        .map(|m| {
            f(m).unwrap_or_else(|e| {
                log::warn!("{label} method {m}: {e}; writing nan");
                nan_row(config)
            })
        })
        .collect()
}

fn run_chol(config: &ExperimentConfig, seed: u64, label: &str) -> Result<InstanceResult> {
    let methods = config.factor_methods()?;
    let mut rng = instance_rng(config, seed);
    let points = build_points(config, config.n, &mut rng)?;
    let spec = kernel(config);
    let params = factor_params(config);
    Ok(per_method(config, &methods, label, |&method| {
        let out = factorize(&spec, &points, method, &params)?;
        let kl = if points.len() <= DENSE_CAP {
            kl_factor(&spec, &points, &out.factor)?
        } else {
            log::warn!("{label} method {method}: N={} exceeds the dense KL cap; kl is nan", points.len());
            f64::NAN
        };
        if config.save_factors {
            let stem = format!("factor_{}_{}_{label}", config.experiment.name(), method.name());
            let base = config.out_dir.join(stem);
            out.factor.write_triplets(BufWriter::new(File::create(base.with_extension("triplets"))?))?;
            out.factor.write_permutation(BufWriter::new(File::create(base.with_extension("perm"))?))?;
        }
        let t = out.timings;
        Ok(vec![
            kl,
            out.factor.nnz() as f64,
            t.total().as_secs_f64(),
            t.ordering.as_secs_f64(),
            t.selection.as_secs_f64(),
            t.entries.as_secs_f64(),
        ])
    }))
}

fn run_gp(config: &ExperimentConfig, seed: u64, label: &str) -> Result<InstanceResult> {
    let methods = config.factor_methods()?;
    let mut rng = instance_rng(config, seed);
    let total = config.n + config.m;
    let points = build_points(config, total, &mut rng)?;
    let split = sample(&mut rng, total, total).into_vec();
    let x_tr = points.select(&split[..config.n]);
    let x_pr = points.select(&split[config.n..]);
    let spec = kernel(config);
    let suite = SyntheticSuite::draw(&spec, x_tr, x_pr, config.realizations, &mut rng)?;
    let params = factor_params(config);
    Ok(per_method(config, &methods, label, |&method| {
        let start = Instant::now();
        let joint = JointFactor::new(&spec, &suite.x_tr, &suite.x_pr, method, &params)?;
        let time = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let r = suite.evaluate(&joint, config.level)?;
        let time_solve = start.elapsed().as_secs_f64();
        Ok(vec![
            r.rmse_vs_dense,
            r.rmse_vs_truth,
            r.coverage,
            r.logdet,
            joint.factor.nnz() as f64,
            time,
            time_solve,
        ])
    }))
}

fn run_cg(config: &ExperimentConfig, seed: u64, label: &str) -> Result<InstanceResult> {
    let methods = config.factor_methods()?;
    let mut rng = instance_rng(config, seed);
    let points = build_points(config, config.n, &mut rng)?;
    let spec = kernel(config);
    let theta = KernelCovariance::new(&spec, &points).dense();
    let x: Vec<f64> = (0..points.len()).map(|_| rng.sample(StandardNormal)).collect();
    let y = theta.apply(&x);
    let params = factor_params(config);
    Ok(per_method(config, &methods, label, |&method| {
        let out = factorize(&spec, &points, method, &params)?;
        let start = Instant::now();
        let report = pcg_solve(&theta, &y, Some(&out.factor), config.tol, config.max_iter)?;
        let time_solve = start.elapsed().as_secs_f64();
        if !report.converged {
            log::warn!("{label} method {method}: no convergence in {} iterations", config.max_iter);
        }
        Ok(vec![
            report.iterations as f64,
            if report.converged { 1.0 } else { 0.0 },
            out.factor.nnz() as f64,
            out.timings.total().as_secs_f64(),
            time_solve,
        ])
    }))
}

fn run_recover(config: &ExperimentConfig, seed: u64, label: &str) -> Result<InstanceResult> {
    let methods = config.recovery_methods()?;
    let rc = RecoveryConfig {
        n: config.n,
        s: config.s,
        diag_value: config.diag_value,
        noise: config.noise,
    };
    let planted = plant_factor(&rc, seed)?;
    Ok(per_method(config, &methods, label, |&method| {
        let r = evaluate(&planted, &rc, method, seed)?;
        if !r.aborted.is_empty() {
            log::warn!("{label} method {method}: {} column(s) lost positive-definiteness", r.aborted.len());
        }
        let kl = r.kl.unwrap_or_else(|| {
            log::warn!("{label} method {method}: Q⁻¹ is not positive-definite; kl is nan");
            f64::NAN
        });
        Ok(vec![r.iou, kl, r.aborted.len() as f64])
    }))
}

fn run_instance(config: &ExperimentConfig, value: f64, seed: u64) -> InstanceResult {
    let c = at_sweep(config, value);
    let label = format!("{}={}_seed={seed}", config.sweep.param.name(), value);
    let out = match c.experiment {
        Experiment::Chol => run_chol(&c, seed, &label),
        Experiment::Gp => run_gp(&c, seed, &label),
        Experiment::Cg => run_cg(&c, seed, &label),
        Experiment::Recover => run_recover(&c, seed, &label),
    };
    out.unwrap_or_else(|e| {
        log::warn!("{label}: {e}; writing nan for every method");
        vec![nan_row(config); config.methods.len()]
    })
}

fn format_value(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "nan".into()
    }
}

/// Runs every (sweep value, seed) instance and writes one CSV per metric
/// and method holding the mean over seeds. Returns the written paths.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    config.validate()?;
    fs::create_dir_all(&config.out_dir)?;
    let cells: Vec<(usize, u64)> = (0..config.sweep.values.len())
        .flat_map(|i| config.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let run = |&(i, seed): &(usize, u64)| {
        log::info!("{} {}={} seed {seed}", config.experiment.name(), config.sweep.param.name(), config.sweep.values[i]);
        run_instance(config, config.sweep.values[i], seed)
    };
    let results: Vec<InstanceResult> = if config.parallel {
        cells.par_iter().map(run).collect()
    } else {
        cells.iter().map(run).collect()
    };

    // (metric, method) -> per sweep value: sum over seeds
    let names = metric_names(config.experiment);
    let mut sums: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for ((i, _), rows) in cells.iter().zip(&results) {
        for (method, row) in rows.iter().enumerate() {
            for (metric, &v) in row.iter().enumerate() {
                sums.entry((metric, method)).or_insert_with(|| vec![0.0; config.sweep.values.len()])[*i] += v;
            }
        }
    }
    let seeds = config.seeds.len() as f64;
    let mut written = Vec::new();
    for ((metric, method), values) in &sums {
        let path = config.out_dir.join(format!(
            "{}_{}_{}.csv",
            config.experiment.name(),
            names[*metric],
            config.methods[*method]
        ));
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "sweep_value,metric")?;
        for (x, total) in config.sweep.values.iter().zip(values) {
            writeln!(w, "{},{}", format_value(*x), format_value(total / seeds))?;
        }
        w.flush()?;
        written.push(path);
    }
    written.sort();
    Ok(written)
}

