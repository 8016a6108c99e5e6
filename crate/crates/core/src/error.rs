use thiserror::Error;

/// Errors raised by the estimators and data loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    /// Malformed or inconsistent input data (unknown site, duplicate row, ...).
    #[error("invalid dataset: {0}")]
    Dataset(String),

    /// An argument violates the documented precondition of an operation.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Not enough observations to run an estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A parameter or intermediate value falls outside the mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Observations outside the fitted GEV support, as (rep, site) index pairs.
    #[error("{} observation(s) outside fitted support, first at rep {} site {}", .cells.len(), .cells[0].0, .cells[0].1)]
    OutsideSupport { cells: Vec<(usize, usize)> },
}

impl Error {
    /// True for input/validation failures, false for failures inside estimators.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Csv(_) | Error::Dataset(_) | Error::InvalidArgument(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
