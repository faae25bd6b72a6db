use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("row {row}, column `{column}`: cannot parse {value:?} as a number")]
    ParseCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column `{column}`: non-finite value")]
    NonFinite { row: usize, column: String },

    #[error("label column {0} not found")]
    MissingLabelColumn(String),

    #[error("dataset has {0} distinct class(es); at least 2 are required")]
    SingleClass(usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("row has {got} features, model expects {expected}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("leaf probabilities sum to {0}, expected 1")]
    Unnormalized(f64),

    #[error("tree depth {depth} exceeds the if-else nesting limit {limit}")]
    NestingLimit { depth: usize, limit: usize },

    #[error("template anchor `{0}` has no binding")]
    UnboundAnchor(String),

    #[error("binding `{0}` does not match any template anchor")]
    UnknownAnchor(String),

    #[error("no C compiler available")]
    ToolchainUnavailable,

    #[error("compilation failed:\n{stderr}")]
    CompileFailed { stderr: String, source_text: String },

    #[error("kernel run failed: {0}")]
    RunFailed(String),

    #[error("malformed RESULT line: {0}")]
    ResultParse(String),

    #[error("RESULT histogram sums to {sum} but rows={rows}")]
    HistogramMismatch { sum: u64, rows: u64 },

    #[error(
        "kernel prediction checksum {kernel:016x} differs from interpreter {interpreter:016x}"
    )]
    ChecksumMismatch { kernel: u64, interpreter: u64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Errors caused by bad user input rather than an internal failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::Io { .. }
                | Error::ToolchainUnavailable
                | Error::CompileFailed { .. }
                | Error::RunFailed(_)
                | Error::ChecksumMismatch { .. }
        )
    }
}
