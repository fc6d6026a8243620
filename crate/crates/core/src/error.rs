use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter or configuration value outside its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Input data that cannot be processed as given.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("segment too short: {actual} samples, need at least {minimum}")]
    TooShort { actual: usize, minimum: usize },

    #[error("ASR calibration found only {found} clean windows, need at least {required}")]
    Calibration { found: usize, required: usize },

    #[error("zero variance in group `{0}`")]
    ZeroVariance(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
