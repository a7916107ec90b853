use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("dimension mismatch at layer `{layer}`: expected {expected:?}, got {got:?}")]
    DimMismatch {
        layer: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("tensor data length {len} does not match dims {dims:?}")]
    BadShape { dims: Vec<usize>, len: usize },
    #[error("backward called before forward (empty or foreign tape)")]
    BackwardBeforeForward,
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("bad magic at offset {offset}")]
    BadMagic { offset: usize },
    #[error("unsupported weight format version {found} at offset {offset}")]
    BadVersion { offset: usize, found: u32 },
    #[error("weight stream truncated at offset {offset} while reading tensor `{tensor}`")]
    Truncated { offset: usize, tensor: String },
    #[error("malformed tensor name at offset {offset}")]
    BadName { offset: usize },
    #[error("weight file has tensor `{found}` where `{expected}` was expected")]
    NameMismatch { expected: String, found: String },
    #[error("weight file tensor count {found} does not match model parameter count {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("{0} has non-finite values")]
    NonFinite(String),
}
