use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("infeasible packing: {0}")]
    InfeasiblePacking(String),

    #[error("oracle scale exceeded: {0}")]
    OracleScale(String),

    #[error("non-ergodic chain: {0}")]
    NonErgodic(String),

    #[error("no root: {0}")]
    NoRoot(String),

    #[error("formula outside validity: {0}")]
    RegimeViolation(String),

    #[error("lattice too large: {0}")]
    LatticeCap(String),

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}
