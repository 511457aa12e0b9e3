//! Sparse approximate inverse Cholesky factors of kernel covariance matrices.
//!
//! Factors are computed column by column by KL-minimization. The sparsity
//! pattern of each column (or group of columns) is either chosen by geometry
//! (`ρ`-balls, nearest neighbors) or by greedy conditional selection, which
//! picks the candidates carrying the most information about the target
//! points conditional on everything picked so far.
//!
//! Module map:
//!
//! * [`kernel`]: Matérn kernels, point sets, covariance sources and a dense
//!   Schur-complement oracle.
//! * [`ordering`]: reverse `p`-maximin ordering and candidate sets.
//! * [`select`]: greedy selection (single target, multiple targets, partial).
//! * [`factor`]: entry computation, supernodes, factorization drivers and
//!   global nonzero allocation.
//! * [`gp`], [`pcg`], [`recovery`]: downstream drivers.
//! * [`metrics`]: KL divergence, RMSE, coverage, IOU.

pub mod dense;
mod error;
pub mod factor;
pub mod gp;
pub mod kernel;
pub mod metrics;
pub mod ordering;
pub mod pcg;
pub mod recovery;
pub mod select;

pub use error::{Error, Result};
pub use factor::{
    factorize, factorize_with_ordering, FactorOutput, FactorParams, Method, SparseFactor,
    SparsityPattern,
};
pub use kernel::{Covariance, KernelCovariance, KernelSpec, MatrixCovariance, PointSet, Smoothness};
pub use ordering::{reverse_maximin, Ordering};
