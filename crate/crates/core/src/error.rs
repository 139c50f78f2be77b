use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the library. The variants map one-to-one onto the
/// CLI exit codes (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input data: bad records, out-of-image candidates, non-finite values.
    #[error("data error: {0}")]
    Data(String),

    /// Dimension or schema mismatch between a model, a dataset and the feature layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// Invalid configuration values.
    #[error("configuration error: {0}")]
    Config(String),

    /// The brute-force oracle refused an enumeration larger than its budget.
    #[error("oracle refused: label space of {space} exceeds budget {budget}")]
    OracleBudget { space: u128, budget: u128 },

    /// A metric is undefined for the given input.
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Process exit status: 1 usage/config, 2 data, 3 dimension/schema.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Schema(_) => 3,
            Error::Data(_)
            | Error::OracleBudget { .. }
            | Error::UndefinedMetric(_)
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::Image(_) => 2,
        }
    }
}
