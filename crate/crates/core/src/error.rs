use thiserror::Error;

pub type Result<T> = std::result::Result<T, SrdaError>;

/// Every failure the library can report.
#[derive(Debug, Error)]
pub enum SrdaError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: {0}")]
    ShapeError(String),
    #[error("vector norm below 1e-12 cannot be normalized")]
    ZeroNorm,
    #[error("diverged at step {step}: {context}")]
    Diverged { step: u64, context: String },
    #[error("label {label} out of range for {classes} classes")]
    InvalidLabel { label: usize, classes: usize },
    #[error("gradient norm below 1e-12; no adversarial direction")]
    FlatGradient,
    #[error("internal error: {0}")]
    Internal(String),
    #[error("rotation requires 2-d data, got {0} dims")]
    NonPlanarData(usize),
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("truncated IDX payload: declared {declared} bytes, found {actual}")]
    TruncatedPayload { declared: usize, actual: usize },
    #[error("unsupported IDX element type {0:#04x}")]
    UnsupportedType(u8),
    #[error("invalid count: {0}")]
    InvalidCount(String),
    #[error("dataset has no labels")]
    UnlabeledData,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("checkpoint format error at line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
