use alloc::string::String;

/// Errors raised by the emulation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("slice count mismatch: left operand has {left}, right operand has {right}")]
    SliceCountMismatch { left: usize, right: usize },

    /// NaN or Inf reached a path that requires finite inputs.
    #[error("non-finite value at ({row}, {col})")]
    ExceptionalValue { row: usize, col: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("exponent range out of FP64 bounds: {0}")]
    Range(String),
}

pub type Result<T> = core::result::Result<T, Error>;
