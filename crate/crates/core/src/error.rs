use std::path::PathBuf;

use thiserror::Error;

use crate::product::ProductPoint;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("tangency violation: {0}")]
    Tangency(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    /// The trust-region solver produced a non-finite quantity it could not
    /// recover from. The last accepted iterate is attached for inspection.
    #[error("solver diverged at iteration {iteration}: {reason} (loss {loss:e}, radius {radius:e})")]
    Diverged {
        iteration: usize,
        reason: String,
        loss: f64,
        radius: f64,
        iterate: Box<ProductPoint>,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// `context` is empty or names the file position, e.g. ` at emb.tsv:4`.
    #[error("duplicate label `{label}`{context}")]
    DuplicateLabel { label: String, context: String },

    #[error("{}:{line}: unknown label `{label}`", path.display())]
    UnknownLabel {
        path: PathBuf,
        line: usize,
        label: String,
    },

    #[error("checksum mismatch in {}: manifest has {expected}, files hash to {actual}", dir.display())]
    Checksum {
        dir: PathBuf,
        expected: String,
        actual: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors raised by the numerical solvers rather than by bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Diverged { .. } | Error::Singular(_)
        )
    }
}
