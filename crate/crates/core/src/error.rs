use std::path::PathBuf;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error in {path}: {msg}")]
    Format { path: PathBuf, msg: String },
    #[error("degenerate region: second-moment matrix has no positive determinant")]
    DegenerateRegion,
    #[error("cannot build a descriptor index from an empty set")]
    EmptyIndex,
    #[error("degenerate sample: points are collinear")]
    DegenerateSample,
    #[error("insufficient matches: {found} correspondences, need at least {needed}")]
    InsufficientMatches { found: usize, needed: usize },
    #[error("no consensus: best model has {best} inliers, need {needed}")]
    NoConsensus { best: usize, needed: usize },
    #[error("invalid rotation matrix: {0}")]
    InvalidRotation(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("reference entry `{id}`: {msg}")]
    Entry { id: String, msg: String },
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("session error: {0}")]
    Session(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
