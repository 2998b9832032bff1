use thiserror::Error;

/// Errors produced by the transform, rotation, and rendering pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("map must be a power-of-two square with side >= 2, got {width}x{height}")]
    NonPowerOfTwo { width: usize, height: usize },

    #[error("channel count must be 1 or 3, got {0}")]
    BadChannels(usize),

    #[error("sample buffer length {got} does not match {expected}")]
    BadSampleCount { got: usize, expected: usize },

    #[error("non-finite sample at index {0}")]
    NonFiniteSample(usize),

    #[error("level {level} out of range for size_exp {size_exp}")]
    LevelOutOfRange { level: usize, size_exp: u32 },

    #[error("size_exp mismatch: {0} vs {1}")]
    SizeMismatch(u32, u32),

    #[error("channel count mismatch: {0} vs {1}")]
    ChannelMismatch(usize, usize),

    #[error("coefficient budget k must be >= 1")]
    ZeroK,

    #[error(
        "azimuth shift of {columns} columns is not grid-aligned for the retained \
         detail levels; use the general rotation path"
    )]
    MisalignedShift { columns: i64 },

    #[error("start_level {start_level} invalid: must satisfy 1 <= start_level <= {max}")]
    BadStartLevel { start_level: usize, max: usize },

    #[error("malformed pyramid: {0}")]
    MalformedPyramid(String),

    #[error("invalid basis index {0}")]
    BadBasisIndex(u64),

    #[error("{path}:{line}: {msg}")]
    ConfigParse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("unsupported or corrupt file {path}: {msg}")]
    FileFormat { path: String, msg: String },

    #[error("image dimensions differ: {0}x{1} vs {2}x{3}")]
    ImageSizeMismatch(usize, usize, usize, usize),

    #[error("invalid material: {0}")]
    BadMaterial(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 1 for IO failures, 2 for validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
