use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("malformed image file: {0}")]
    MalformedFile(String),

    #[error("unsupported image format (expected PNG or JPEG)")]
    UnsupportedFormat,

    #[error("image is {width}x{height}; both sides must be at least {min}")]
    DimensionTooSmall { width: u32, height: u32, min: u32 },

    /// Coefficient access on a JPEG that is not baseline/extended sequential.
    #[error("JPEG coding process not supported for coefficient access: {0}")]
    UnsupportedJpeg(String),

    #[error("module {0} needs the original JPEG bytes")]
    JpegRequired(&'static str),

    #[error("module {0} is registered but has no implementation")]
    ModuleNotImplemented(&'static str),

    #[error("raw map contains non-finite values")]
    NonFiniteInput,

    #[error("module pool is empty")]
    EmptyPool,

    #[error("empty input")]
    EmptyInput,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown module id {0}")]
    UnknownModuleId(u16),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("need {needed} candidates, only {available} available")]
    NotEnoughCandidates { needed: usize, available: usize },

    #[error("ROC AUC needs both positive and negative labels")]
    SingleClass,

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("corpus has no usable items")]
    EmptyCorpus,

    #[error("infeasible configuration: {0}")]
    InfeasibleConfig(String),

    #[error("rectangle out of bounds: {0}")]
    RectOutOfBounds(String),

    #[error("source and destination rectangles overlap")]
    RectOverlap,

    #[error("corrupt entry {path}: {reason}")]
    CorruptEntry { path: PathBuf, reason: String },

    #[error("format version {found} not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
