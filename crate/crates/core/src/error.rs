use thiserror::Error;

#[derive(Debug, Error)]
pub enum SysIdError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not block-Hankel: block ({0},{1}) differs from block ({2},{3})")]
    NotHankel(usize, usize, usize, usize),

    #[error("state norm {norm:.3e} exceeded the overflow guard at step {step}")]
    Overflow { step: usize, norm: f64 },

    #[error(
        "design matrix is rank deficient (smallest eigenvalue of X'X/N = {min_eig:.3e}); \
         enable the ridge fallback to solve anyway"
    )]
    RankDeficientDesign { min_eig: f64 },

    #[error("unobservable truncation: s_d(O+) = {0:.3e} is below the pseudo-inverse cutoff")]
    UnobservableTruncation(f64),

    #[error("oracle size guard exceeded: {0} unknowns (limit 200)")]
    OracleTooLarge(usize),

    #[error("malformed trajectory data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SysIdError>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SysIdError::DimensionMismatch(msg.into()))
}

pub(crate) fn arg_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(SysIdError::InvalidArgument(msg.into()))
}
