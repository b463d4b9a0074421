use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("label length mismatch: {0} vs {1}")]
    LabelLength(usize, usize),

    #[error("unknown token `{0}`")]
    UnknownToken(String),

    #[error("unknown token id {0}")]
    UnknownTokenId(usize),

    #[error("token `{0}` is already registered")]
    DuplicateToken(String),

    #[error("object has no registered name token")]
    MissingName,

    #[error("empty token sequence")]
    EmptyTokens,

    #[error("could not place {count} objects after {attempts} attempts")]
    Placement { count: usize, attempts: usize },

    #[error("requested {requested} objects with unique attributes but only {available} combinations exist")]
    NotEnoughCombinations { requested: usize, available: usize },

    #[error("action ({row}, {col}, k={k}) is outside the {size}x{size} image or orientation range")]
    ActionOutOfRange { row: usize, col: usize, k: usize, size: usize },

    #[error("orientation index {k} out of range for {n} orientations")]
    Orientation { k: usize, n: usize },

    #[error("no object with id {0} in scene")]
    UnknownObject(u32),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("empty background mask with nonzero background weight")]
    EmptyMask,

    #[error("hindsight relabeling requires a successful grasp")]
    NoGrasp,

    #[error("no successful grasp within {0} attempts")]
    AdaptationFailed(usize),

    #[error("rotated action pixel falls outside the image for orientation {0}")]
    RotationOutOfBounds(usize),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid file format in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
