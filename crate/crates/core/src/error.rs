use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice shape: {0}")]
    InvalidShape(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("corner {0:?} does not lie on the lattice")]
    OffLattice(Vec<f64>),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("Hurst exponent on axis {axis} is {value}, must lie in (0, 1)")]
    InvalidHurst { axis: usize, value: f64 },

    #[error("circulant embedding of length {len} has eigenvalue {min_eigenvalue:e} below -{eps_clip:e}")]
    Embedding {
        len: usize,
        min_eigenvalue: f64,
        eps_clip: f64,
    },

    #[error("Cholesky factorization broke down at row {row} (pivot {pivot:e})")]
    Cholesky { row: usize, pivot: f64 },

    #[error("functional is not centered: zeroth Hermite coefficient is {0:e}")]
    NotMeanZero(f64),

    #[error("Hermite coefficients did not converge under node doubling (last change {0:e})")]
    QuadratureNonConvergence(f64),

    #[error("expansion has no coefficient above the rank threshold")]
    DegenerateExpansion,

    #[error("no branch applies: {0}")]
    Branch(String),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("combinatorial guard: estimated {estimate:e} terms exceeds cap {cap:e}")]
    GuardCap { estimate: f64, cap: f64 },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("invalid configuration at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("malformed data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(pointer: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            pointer: pointer.into(),
            message: message.into(),
        }
    }
}
