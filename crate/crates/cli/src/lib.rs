//! Experiment harness for `cknn`: point geometries and CSV ingestion, the
//! `chol`, `gp`, `cg` and `recover` experiment drivers, and CSV output.
//!
//! Each experiment writes `{out_dir}/{experiment}_{metric}_{method}.csv` with
//! header `sweep_value,metric`, one row per sweep value, averaged over seeds.

pub mod config;
pub mod experiment;
pub mod geometry;

pub use config::{Experiment, ExperimentConfig, Geometry, Sweep, SweepParam};
pub use experiment::{is_timing_metric, metric_names, run_experiment};
pub use geometry::{grid_perturbed, ingest_points, parse_points, uniform_cube, Ingested};
