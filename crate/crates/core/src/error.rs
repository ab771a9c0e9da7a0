use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("pattern mismatch: sparse operands do not share a sparsity pattern")]
    PatternMismatch,

    #[error("empty graph")]
    EmptyGraph,

    #[error("cannot denoise: target rate {target} is below the current rate {current}")]
    CannotDenoise { current: f64, target: f64 },

    #[error("target unreachable: {0}")]
    TargetUnreachable(String),

    #[error("negative entry in {0}")]
    NegativeEntry(&'static str),

    #[error("empty split: {0}")]
    EmptySplit(&'static str),

    #[error("class too small: class {class} has {available} labeled nodes, {required} required")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("infeasible split sizes: {0}")]
    InfeasibleSplit(String),

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("missing required config key `{0}`")]
    MissingKey(String),

    #[error("bad config value for `{key}`: {msg}")]
    BadValue { key: String, msg: String },

    #[error("unknown variant `{0}`")]
    UnknownVariant(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for errors caused by bad user input (files, configs, arguments)
    /// as opposed to failures during a run.
    pub fn is_usage_error(&self) -> bool {
        matches!(
            self,
            Error::MissingFile(_)
                | Error::Parse { .. }
                | Error::Invalid(_)
                | Error::UnknownKey(_)
                | Error::MissingKey(_)
                | Error::BadValue { .. }
                | Error::UnknownVariant(_)
                | Error::CannotDenoise { .. }
                | Error::ClassTooSmall { .. }
                | Error::InfeasibleSplit(_)
        )
    }
}
