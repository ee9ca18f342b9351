use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no inner product: {0}")]
    NoInnerProduct(String),
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),
    #[error("not exact: {0}")]
    NotExact(String),
    #[error("outside cutoff: {0}")]
    OutsideCutoff(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("singular: {0}")]
    Singular(String),
    #[error("not convergent: {0}")]
    NotConvergent(String),
    #[error("unknown: {0}")]
    Unknown(String),
}

pub type Result<T> = std::result::Result<T, Error>;
