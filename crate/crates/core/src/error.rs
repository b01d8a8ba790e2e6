use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: corrupt file: {msg}")]
    CorruptFile { path: PathBuf, msg: String },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("sequence inconsistency: {0}")]
    SequenceInconsistency(String),

    #[error("invalid label mask: {0}")]
    InvalidMask(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no scribble evidence for any label")]
    NoEvidence,

    #[error("solver diverged at iteration {iteration}: objective {objective}")]
    Divergence { iteration: usize, objective: f64 },

    #[error("frame {frame}: {source}")]
    AtFrame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn at_frame(self, frame: usize) -> Self {
        match self {
            e @ Error::AtFrame { .. } => e,
            e => Error::AtFrame { frame, source: Box::new(e) },
        }
    }

    /// Whether the error stems from the inputs rather than a failure of the
    /// engine itself.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Divergence { .. } => false,
            Error::AtFrame { source, .. } => source.is_input_error(),
            _ => true,
        }
    }
}
