use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("row {row}, column `{column}`: {reason}")]
    Cell {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("unexpected column `{0}`")]
    UnexpectedColumn(String),

    #[error("invalid subgroup: {0}")]
    Subgroup(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// A metric is undefined on its input (empty subgroup, group without
    /// positives, ...).
    #[error("degenerate metric: {0}")]
    Degenerate(String),

    #[error("bias statistic `{name}` returned {value}, outside [-1, 1]")]
    StatisticOutOfBounds { name: String, value: f64 },

    #[error("invalid bias spec: {0}")]
    BiasSpec(String),

    #[error("template: {0}")]
    Template(String),

    #[error("generation parse error: {0}")]
    Parse(#[from] crate::generate::ParseError),

    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: usize, message: String },

    #[error("parse failure rate {rate:.3} exceeds threshold {threshold:.3}")]
    ParseFailureRate { rate: f64, threshold: f64 },

    #[error("training: {0}")]
    Training(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
