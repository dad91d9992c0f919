use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("missing annotation file for clip {clip}: {path}")]
    MissingAnnotation { clip: String, path: PathBuf },

    #[error("malformed annotation {path}: {message}")]
    BadAnnotation { path: PathBuf, message: String },

    #[error("unknown attack folder name '{0}'")]
    UnknownAttackKind(String),

    #[error("degenerate quad")]
    DegenerateQuad,

    #[error("unsupported resampling ratio {source_fps} -> {target_fps}")]
    UnsupportedResampling { source_fps: f64, target_fps: f64 },

    #[error("cannot stratify: document model '{model}' has {count} identities (need at least 2)")]
    CannotStratify { model: String, count: usize },

    #[error("clip too short: {0}")]
    ClipTooShort(String),

    #[error("insufficient clips for identity {0}")]
    InsufficientClips(String),

    #[error("empty training set")]
    EmptyTrainSet,

    #[error("single-class data: {0}")]
    SingleClass(&'static str),

    #[error("degenerate embedding in clip {0}")]
    DegenerateEmbedding(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss = {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f32 },

    #[error("non-finite gradient encountered")]
    NonFiniteGradient,

    #[error("invalid checkpoint {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("parse error in {what}: {message}")]
    Parse { what: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
