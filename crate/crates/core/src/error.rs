use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("matrix is not symmetric: entry ({row},{col}) differs from its transpose")]
    NotSymmetric { row: usize, col: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("driver variant does not support this operation: {0}")]
    Unsupported(String),

    #[error("regression at node {node} is rank-deficient (condition number {condition:.3e})")]
    RankDeficient { node: usize, condition: f64 },

    #[error("CFL condition violated: dt = {dt:.3e} exceeds bound {bound:.3e}")]
    Cfl { dt: f64, bound: f64 },

    #[error("NaN detected in PDE sweep at time step {step}")]
    PdeBlowUp { step: usize },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
