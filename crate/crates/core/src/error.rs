use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("matrix is singular or ill-conditioned (condition estimate {condition:e})")]
    Singular { condition: f64 },

    #[error("matrix is not symmetric: max |B - B^T| = {deviation:e}")]
    Asymmetric { deviation: f64 },

    #[error("capacity exceeded: {what} needs {needed}, cap is {cap}")]
    Capacity { what: &'static str, needed: u128, cap: u128 },

    #[error("photon number mismatch: expected {expected}, found {found}")]
    PhotonNumber { expected: u32, found: u32 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("validity constraint violated: {0}")]
    Validity(String),

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension { expected: expected.to_string(), found: found.to_string() }
    }
}
