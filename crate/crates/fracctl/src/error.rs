use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("not controllable: {detail}")]
    NotControllable { detail: String, rank: Option<usize>, lambda_min: Option<f64>, lambda_max: Option<f64> },

    #[error("series truncation tolerance {tol:e} unreachable within {terms} terms (tail {tail:e})")]
    Truncation { tol: f64, terms: usize, tail: f64 },

    #[error("field f is not positive: {0}")]
    NonPositiveField(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
