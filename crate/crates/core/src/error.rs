use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),

    #[error("algebra has no matrix representation")]
    MissingMatrixRep,

    #[error("subspace is not invariant under the map (residual {residual:.3e})")]
    InvarianceViolation { residual: f64 },

    #[error("subspace is not an ideal (residual {residual:.3e})")]
    NotAnIdeal { residual: f64 },

    #[error("columns are not linearly independent (rank {rank} < {cols})")]
    RankDeficient { rank: usize, cols: usize },

    #[error("principal logarithm undefined: eigenvalue {re:.3e}{im:+.3e}i on the closed negative real axis")]
    PrincipalLogUndefined { re: f64, im: f64 },

    #[error("hold-interval generators do not commute (residual {residual:.3e})")]
    NonCommutingHold { residual: f64 },

    #[error("expansion cutoff {given} too small for tolerance; need at least {required}")]
    CutoffTooSmall { given: usize, required: usize },

    #[error("hypothesis not satisfied: {0}")]
    Hypothesis(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
