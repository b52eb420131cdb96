//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no points")]
    NoPoints,

    #[error("non-finite coordinate")]
    NonFinite,

    #[error("degenerate hull")]
    DegenerateHull,

    #[error("extent undefined")]
    ExtentUndefined,

    #[error("uncovered pixels: stride {stride} exceeds tile side {side}")]
    UncoveredPixels { side: u32, stride: u32 },

    #[error("tile ({x}, {y}) side {side} outside grid of {width}x{height} px")]
    TileOutOfBounds {
        x: u32,
        y: u32,
        side: u32,
        width: u32,
        height: u32,
    },

    #[error("mask geometry mismatch: {0}")]
    MaskGeometryMismatch(String),

    #[error("Dice undefined: both masks empty")]
    DiceUndefined,

    #[error("slide id mismatch: {0}")]
    SlideIdMismatch(String),

    #[error("tumor outside tissue")]
    TumorOutsideTissue,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("classifier failure on tile ({x}, {y}): {reason}")]
    Classifier { x: u32, y: u32, reason: String },

    #[error("malformed input at byte {offset}: {reason}")]
    Malformed { offset: u64, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }
}
