use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad magic: expected \"LQT1\", found {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported tensor file version {0} (expected 1)")]
    BadVersion(u32),
    #[error("malformed tensor file header: {0}")]
    HeaderParse(String),
    #[error("tensor `{tensor}`: payload range {start}..{end} is out of bounds or overlaps (payload is {payload_len} bytes)")]
    OffsetOutOfBounds {
        tensor: String,
        start: u64,
        end: u64,
        payload_len: u64,
    },
    #[error("tensor `{tensor}` contains a non-finite value at flat index {index}")]
    NonFiniteValue { tensor: String, index: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("axis extent {extent} is not divisible by block size {block_size}")]
    NotDivisible { extent: usize, block_size: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("unknown format `{0}`")]
    UnknownFormat(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty tensor")]
    EmptyTensor,
    #[error("reference signal has zero energy")]
    ZeroSignal,

    #[error("rank {rank} out of range 1..={max}")]
    RankOutOfRange { rank: usize, max: usize },
    #[error("SVD did not converge after {sweeps} sweeps")]
    NonConvergence { sweeps: usize },

    #[error("report serialization failed: {0}")]
    Report(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Report(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Report(e.to_string())
    }
}
