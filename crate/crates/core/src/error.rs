use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum MatmiError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("solver did not converge: {iterations} iterations, relative residual {residual:.3e}")]
    Solver { iterations: usize, residual: f64 },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("step size error: {0}")]
    StepSize(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MatmiError>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(MatmiError::Parameter(msg()))
    }
}
