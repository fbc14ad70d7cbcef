use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// Variants are grouped loosely by the stage that raises them; [`Error::kind`]
/// collapses them into the coarse categories the CLI maps onto exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left:?}, right is {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing column `{column}`")]
    MissingColumn { column: String },

    #[error("gap in timestamps at row {row}: expected hour {expected}, found {found}")]
    GapInTimestamps { row: usize, expected: i64, found: i64 },

    #[error("non-numeric cell at row {row}, column `{column}`: {value:?}")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("value out of range at row {row}, column `{column}`: {value} ({reason})")]
    OutOfRange {
        row: usize,
        column: String,
        value: f64,
        reason: &'static str,
    },

    #[error("series too short: need {required} rows, have {actual}")]
    SeriesTooShort { required: usize, actual: usize },

    #[error("series `{0}` is already normalized")]
    AlreadyNormalized(String),

    #[error("series `{0}` must be normalized first")]
    NotNormalized(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("empty list of reports")]
    EmptyList,

    #[error("correlation undefined: `{0}` is constant")]
    ConstantVector(&'static str),

    #[error("model input width {expected} does not match feature width {actual}")]
    WidthMismatch { expected: usize, actual: usize },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    DivergedLoss { epoch: usize, loss: f64 },

    #[error("RBM with {visible} visible and {hidden} hidden units is too large to enumerate (limit {limit})")]
    TooLargeToEnumerate {
        visible: usize,
        hidden: usize,
        limit: usize,
    },

    #[error("unsupported model document: {0}")]
    VersionMismatch(String),

    #[error("deserialization failed: {0}")]
    Deserialize(#[from] serde_json::Error),

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration.
    Usage,
    /// Malformed or insufficient data, corrupt model files, IO.
    Data,
    /// A training loop produced a non-finite or exploding loss.
    Divergence,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DivergedLoss { .. } | Error::NonFinite(_) => ErrorKind::Divergence,
            Error::InvalidArgument(_) => ErrorKind::Usage,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
