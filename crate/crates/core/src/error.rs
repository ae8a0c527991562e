//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("point behind camera (depth {depth:.6} m)")]
    BehindCamera { depth: f64 },

    #[error("under-determined triangulation: {got} usable observations, need {needed}")]
    Underdetermined { needed: usize, got: usize },

    #[error("non-finite value produced by primitive `{op}`")]
    NonFinite { op: &'static str },

    #[error("trajectory too short: {got} frames, need at least {needed}")]
    TooShort { needed: usize, got: usize },

    #[error("missing channel {0}")]
    MissingChannel(&'static str),

    #[error("phase segmentation failed: {0}")]
    Segmentation(String),

    #[error("static scaling solve diverged: {0}")]
    Scaling(String),

    #[error("lag alignment failed: {0}")]
    Alignment(String),

    #[error("lag of {got} samples exceeds the allowed {max} samples")]
    LagTooLarge { got: i64, max: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
