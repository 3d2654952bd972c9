use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(PathBuf),

    #[error("corrupt image {path}: {reason}")]
    CorruptImage { path: PathBuf, reason: String },

    #[error("mask {path} is not binary: {ambiguous} of {total} pixels have mid-range luminance")]
    AmbiguousMask {
        path: PathBuf,
        ambiguous: usize,
        total: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("masks are empty")]
    EmptyMask,

    #[error("ground truth contains a single class")]
    SingleClassGroundTruth,

    #[error("no valid images")]
    NoValidImages,

    #[error("no matching prediction/ground-truth pairs: {0}")]
    MissingPair(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid fisheye model: {0}")]
    InvalidModel(String),

    #[error("view direction is at or below the horizon")]
    ViewBelowHorizon,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
