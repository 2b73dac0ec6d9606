use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not Hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("utility domain violation: {0}")]
    Domain(String),

    #[error("invalid utility parameters: {0}")]
    InvalidUtility(String),

    #[error("lambda {lambda:e} is below the floor and the channel is outside the leakage span")]
    LambdaBelowFloor { lambda: f64 },

    #[error("zero channel vector for cell {cell}, sub-channel {sub}, slot {slot}")]
    ZeroChannel { cell: usize, sub: usize, slot: usize },

    #[error("in-cell zero-forcing is rank deficient at cell {cell}, sub-channel {sub}, slot {slot}")]
    RankDeficient { cell: usize, sub: usize, slot: usize },

    #[error("in-cell zero-forcing needs Q <= T (Q = {q}, T = {t})")]
    TooManyUsers { q: usize, t: usize },

    #[error("invalid configuration at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("{0}")]
    Unsupported(String),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
