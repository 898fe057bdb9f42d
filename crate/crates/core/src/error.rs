//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by meshing, assembly, factorization and the solver stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not symmetric: relative asymmetry {asym:.3e} exceeds {tol:.1e}")]
    NotSymmetric { asym: f64, tol: f64 },

    #[error("matrix is not positive definite: pivot {index} evaluated to {value:.6e}")]
    NotSpd { index: usize, value: f64 },

    #[error("SVD did not converge")]
    SvdFailed,

    #[error("singular system: cond2 = {cond:.3e}")]
    SingularSystem { cond: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite state at step {step}")]
    Unstable { step: usize },

    #[error("singular value list is empty or all zero")]
    DegenerateSpectrum,

    #[error("requested dimension {requested} exceeds available rank {available}")]
    RankExceeded { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed data file {path}: {reason}")]
    Format { path: String, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
