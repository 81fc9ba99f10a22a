use thiserror::Error;

/// Errors raised by the combinatorial and analytic engines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("enumeration of size {size} exceeds the configured cap {cap}")]
    EnumerationCap { size: usize, cap: usize },

    #[error("ground sizes differ: {left} vs {right}")]
    GroundSizeMismatch { left: usize, right: usize },

    #[error("invalid set partition: {0}")]
    InvalidPartition(String),

    #[error("invalid integer partition: {0}")]
    InvalidIntegerPartition(String),

    #[error("{sigma} is not below {pi} in the refinement order")]
    NotOrdered { sigma: String, pi: String },

    #[error("table is incomplete: {0}")]
    IncompleteTable(String),

    #[error("matrix is not symmetric at ({0}, {1})")]
    NonSymmetric(usize, usize),

    #[error("diagram is not Gaussian")]
    NotGaussian,

    #[error("partition is not a circular four-row matching: {0}")]
    NotCircular(String),

    #[error("invalid cell system: {0}")]
    InvalidSystem(String),

    #[error("kernels live on different cell systems")]
    SystemMismatch,

    #[error("degree mismatch: {0}")]
    DegreeMismatch(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("kernel must vanish on repeated cells")]
    NotOffDiagonal,

    #[error("sample and kernel disagree: {0}")]
    SampleMismatch(String),

    #[error("Hermite degree {0} exceeds the cap of 30")]
    HermiteCap(usize),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("sample count must be positive")]
    NoSamples,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;
