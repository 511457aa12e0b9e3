use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cknn::kernel::Smoothness;
use cknn_cli::{run_experiment, Experiment, ExperimentConfig, Geometry, Sweep};

#[derive(Parser)]
#[command(name = "cknn", version, about = "Sparse inverse Cholesky experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// KL divergence and timing of sparse factors.
    Chol(Flags),
    /// Gaussian-process regression on prior draws.
    Gp(Flags),
    /// Conjugate gradient preconditioned by sparse factors.
    Cg(Flags),
    /// Recovery of planted sparse factors.
    Recover(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Matérn smoothness: 0.5, 1.5 or 2.5.
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    lengthscale: f64,
    #[arg(long, default_value_t = 0.0)]
    nugget: f64,
    #[arg(long, default_value_t = 2.0)]
    rho: f64,
    #[arg(long, default_value_t = 2.0)]
    rho_s: f64,
    #[arg(long, default_value_t = 1.5)]
    lambda: f64,
    /// Off-diagonal entries per column instead of the ρ-ball sizes.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p_order: Option<usize>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    method: Vec<String>,
    /// `param=v1,v2,...` with param one of n, rho, s, noise.
    #[arg(long)]
    sweep: Option<Sweep>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Read points from a CSV file with a header row.
    #[arg(long)]
    points_csv: Option<PathBuf>,
    /// Zero-based feature columns of the CSV file.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<usize>,
    /// grid or uniform (ignored with --points-csv).
    #[arg(long)]
    geometry: Option<String>,
    /// Grid perturbation half-width.
    #[arg(long, default_value_t = 1e-2)]
    delta: f64,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
    /// Run experiment cells in parallel.
    #[arg(long)]
    parallel: bool,
    /// Prediction points (gp).
    #[arg(long, default_value_t = 128)]
    m: usize,
    /// Prior draws per instance (gp).
    #[arg(long, default_value_t = 1000)]
    realizations: usize,
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iter: usize,
    /// Planted entries per column (recover).
    #[arg(long, default_value_t = 32)]
    s: usize,
    /// Noise variance (recover).
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Write chol factors as triplet files.
    #[arg(long)]
    save_factors: bool,
}

fn build(experiment: Experiment, f: Flags) -> cknn::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::new(experiment, f.out_dir);
    if let Some(n) = f.n {
        c.n = n;
    }
    if let Some(dim) = f.dim {
        c.dim = dim;
    }
    if let Some(nu) = f.nu {
        c.smoothness = Smoothness::from_nu(nu)?;
    }
    c.length_scale = f.lengthscale;
    c.nugget = f.nugget;
    c.rho = f.rho;
    c.rho_s = f.rho_s;
    c.lambda = f.lambda;
    c.k = f.k;
    if let Some(p) = f.p_order {
        c.p = p;
    }
    if !f.method.is_empty() {
        c.methods = f.method;
    }
    c.seeds = f.seeds;
    c.geometry = match (f.points_csv, f.geometry.as_deref()) {
        (Some(path), _) => {
            let columns = (!f.columns.is_empty()).then_some(f.columns);
            if let Some(cols) = &columns {
                c.dim = cols.len();
            }
            Geometry::Csv { path, columns }
        }
        (None, Some("grid")) => Geometry::GridPerturbed { delta: f.delta },
        (None, Some("uniform")) => Geometry::UniformCube,
        (None, Some(other)) => {
            return Err(cknn::Error::InvalidParameter(format!("unknown geometry {other:?}")));
        }
        (None, None) => match c.geometry {
            Geometry::GridPerturbed { .. } => Geometry::GridPerturbed { delta: f.delta },
            g => g,
        },
    };
    c.sweep = f.sweep.unwrap_or(Sweep {
        param: cknn_cli::SweepParam::N,
        values: vec![c.n as f64],
    });
    c.parallel = f.parallel;
    c.m = f.m;
    c.realizations = f.realizations;
    c.tol = f.tol;
    c.max_iter = f.max_iter;
    c.s = f.s;
    c.noise = f.noise;
    c.save_factors = f.save_factors;
    Ok(c)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (experiment, flags) = match cli.command {
        Command::Chol(f) => (Experiment::Chol, f),
        Command::Gp(f) => (Experiment::Gp, f),
        Command::Cg(f) => (Experiment::Cg, f),
        Command::Recover(f) => (Experiment::Recover, f),
    };
    let result = build(experiment, flags).and_then(|c| run_experiment(&c));
    match result {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::FAILURE
        }
    }
}
