use thiserror::Error;

/// Failure modes shared by every module of the core crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite function value at coordinate {index}")]
    NonFinite { index: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} is outside the {encoding} encoding")]
    InvalidLabel { label: i32, encoding: &'static str },
    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),
    #[error("point sets differ in size: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("support of size {m} exceeds the enumeration cap {cap}")]
    SupportTooLarge { m: usize, cap: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
