use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dimension {0}: must be between 1 and {max}", max = crate::signed_permutation::MAX_DIMENSION)]
    InvalidDimension(usize),

    #[error("codebook index {index} out of range for size {size}")]
    IndexOutOfRange { index: u64, size: u64 },

    #[error("invalid signed permutation: {0}")]
    InvalidElement(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid modulus {0}: must be at least 2")]
    InvalidModulus(u64),

    #[error("sequence with p = {p} is not purely periodic modulo {modulus}")]
    NotPurelyPeriodic { p: usize, modulus: u64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("malformed frame: {0}")]
    MalformedFrame(String),

    #[error("corrupt packet seq {seq}: crc {received:#010x} != {computed:#010x}")]
    CorruptPacket { seq: u32, received: u32, computed: u32 },

    #[error("stale packet seq {seq}: last accepted {last}")]
    StalePacket { seq: u32, last: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
