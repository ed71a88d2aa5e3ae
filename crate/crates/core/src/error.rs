use thiserror::Error;

/// Failure modes shared by every layer of the library.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(String),
    #[error("not a unit at precision: {0}")]
    NotAUnit(String),
    #[error("context mismatch: {0}")]
    ContextMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("no obstruction: {0}")]
    NoObstruction(String),
    #[error("not in scope: {0}")]
    NotInScope(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn is_precision(&self) -> bool {
        matches!(self, Error::PrecisionExhausted(_))
    }
}
