use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set that can never produce a valid object.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition (shape, label, length).
    #[error("contract violation: {0}")]
    Contract(String),

    /// A sliding window has not accumulated enough samples yet.
    #[error("window not full yet")]
    NotReady,

    #[error("calibration incomplete: {have} frames collected, {need} required (>= 3 s)")]
    CalibrationIncomplete { have: usize, need: usize },

    #[error("pipeline is not calibrated; run a calibration span first")]
    NotCalibrated,

    #[error("numerical rank deficiency: {0}; use a regularization alpha > 0")]
    NumericalRank(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
