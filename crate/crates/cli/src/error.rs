use std::fmt;

use hankel_sysid::SysIdError;

/// Process exit codes. Stable across releases.
pub mod code {
    pub const OK: i32 = 0;
    /// A `check` or bench criterion failed, or an unclassified runtime error.
    pub const FAILURE: i32 = 1;
    /// Config file missing, unreadable or not matching its schema.
    pub const CONFIG: i32 = 2;
    /// Simulation state exceeded the overflow guard.
    pub const OVERFLOW: i32 = 3;
    /// A solver stopped before its tolerances were met (outputs are still written).
    pub const NOT_CONVERGED: i32 = 4;
    /// Trajectory and config disagree on dimensions.
    pub const DIMENSION: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Overflow(String),
    NotConverged(String),
    Dimension(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => code::CONFIG,
            CliError::Overflow(_) => code::OVERFLOW,
            CliError::NotConverged(_) => code::NOT_CONVERGED,
            CliError::Dimension(_) => code::DIMENSION,
            CliError::Failed(_) => code::FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Overflow(m) => write!(f, "overflow: {m}"),
            CliError::NotConverged(m) => write!(f, "not converged: {m}"),
            CliError::Dimension(m) => write!(f, "dimension mismatch: {m}"),
            CliError::Failed(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<SysIdError> for CliError {
    fn from(e: SysIdError) -> Self {
        let msg = e.to_string();
        match e {
            SysIdError::InvalidArgument(_) | SysIdError::Format(_) => CliError::Config(msg),
            SysIdError::Overflow { .. } => CliError::Overflow(msg),
            SysIdError::DimensionMismatch(_) | SysIdError::NotHankel(..) => CliError::Dimension(msg),
            _ => CliError::Failed(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Failed(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Failed(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Failed(format!("json: {e}"))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
