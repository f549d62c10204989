use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported container: {0}")]
    UnsupportedContainer(PathBuf),

    #[error("malformed image {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error("image has {channels} channels and no channel was selected")]
    MultiChannel { channels: u8 },

    #[error("channel {channel} requested but image has {channels} channels")]
    ChannelOutOfRange { channel: usize, channels: u8 },

    #[error("unsupported bit depth {0}")]
    BitDepth(u8),

    #[error("image codec error: {0}")]
    Codec(#[from] image::ImageError),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("label value {0} is assigned to more than one vessel type")]
    OverlappingLabels(u16),

    #[error("label value {0} is not in the label mapping")]
    UnmappedLabel(u16),

    #[error("edge has {0} pixels; at least 2 are required")]
    EdgeTooShort(usize),

    #[error("gaussian sigma {sigma} px is below raster resolution (0.5 px)")]
    ScaleTooSmall { sigma: f64 },

    #[error("attention map value {value} outside [0, 1]")]
    AttentionOutOfRange { value: f64 },

    #[error("phantom does not fit in {width}x{height}")]
    PhantomOutOfBounds { width: usize, height: usize },

    #[error("phantom is not a single open curve")]
    NotOpenCurve,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no eyes found under {0}")]
    NoEyes(PathBuf),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
