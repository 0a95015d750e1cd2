use thiserror::Error;

/// Errors produced by the solvers, oracles and data loaders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter combination that cannot be used (infeasible schedule,
    /// batch larger than the dataset, zero smoothing without strong
    /// concavity, ...).
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// Bad numeric input handed to an oracle.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Non-finite value encountered while iterating.
    #[error("numeric failure at iteration {iteration}: {message}")]
    Numeric { iteration: usize, message: String },
    /// Malformed data file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    /// Any other I/O or data problem.
    #[error("data error: {0}")]
    Data(String),
    /// Combination of regularizer / dual function the oracle does not cover.
    #[error("not implemented: {0}")]
    NotImplemented(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(e.to_string())
    }
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidConfig(msg.into()))
}

pub(crate) fn ensure_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} contains non-finite entries"
        )))
    }
}
