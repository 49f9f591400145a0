use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("invalid points: {0}")]
    InvalidPoints(String),

    #[error("invalid parameter `{field}`: {message}")]
    InvalidParam { field: &'static str, message: String },

    #[error("index out of bounds: {0}")]
    Bounds(String),

    #[error("no positive finite values to analyse")]
    EmptyData,

    #[error("unknown cluster id {0}")]
    UnknownCluster(usize),

    #[error("brute-force oracle refuses {n} points (cap {cap})")]
    OracleTooLarge { n: usize, cap: usize },

    #[error("cluster vanished while peeling; last non-empty depth was {last_depth}")]
    PeelExhausted { last_depth: usize },

    #[error("generator could not place feature {index} after {attempts} attempts")]
    Placement { index: usize, attempts: usize },

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

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: message.into(),
        }
    }

    pub(crate) fn param(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            message: message.into(),
        }
    }
}
