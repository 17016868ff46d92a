//! Error type shared across the calibration toolkit.

use std::path::PathBuf;

/// Convenient alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// An input value lies outside the mathematical domain of the operation.
    #[error("domain error in {context}: {message}")]
    Domain {
        context: &'static str,
        message: String,
    },

    /// Too few usable inputs to produce a well-defined result.
    #[error("insufficient data for {context}: need at least {needed}, got {got}")]
    InsufficientData {
        context: &'static str,
        needed: usize,
        got: usize,
    },

    /// The observation geometry does not constrain the solution
    /// (e.g. all detections share one bearing).
    #[error("singular geometry in {context}: {message}")]
    SingularGeometry {
        context: &'static str,
        message: String,
    },

    /// The yaw-rate scale is unobservable from the data; callers should
    /// fall back to the weighted-mean angle solver with unit scale.
    #[error(
        "yaw-rate scale is unobservable ({message}); fall back to the \
         weighted-mean solver with inverse scale fixed at 1"
    )]
    UnobservableScale { message: String },

    /// A configuration failed validation; lists every offending field.
    #[error("invalid configuration: {}", fields.join(", "))]
    InvalidConfig { fields: Vec<String> },

    /// A data file could not be parsed.
    #[error("parse error in {path} at line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// Per-frame auxiliary data does not line up with the radar frames.
    #[error("alignment error at frame {frame}: {message}")]
    Alignment { frame: usize, message: String },

    /// Underlying file-system failure.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn domain(context: &'static str, message: impl Into<String>) -> Self {
        Error::Domain {
            context,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
