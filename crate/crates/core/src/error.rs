//! Error type shared by the user-facing surfaces (file formats, extraction,
//! metrics, training). Internal tensor shape violations panic instead: they
//! are programming errors, and the panic message names the op and shapes.

use std::fmt;
use std::io;
use std::path::PathBuf;

#[derive(Debug)]
pub enum Error {
    /// Malformed or truncated file; offset is in bytes from file start.
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },
    Io {
        path: PathBuf,
        source: io::Error,
    },
    /// Two fields/masks that must agree in size do not.
    DimMismatch {
        context: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    /// Input image too small for the requested patch/kernel geometry.
    ImageTooSmall {
        height: usize,
        width: usize,
        min: usize,
    },
    /// A rollout or training step produced a non-finite value.
    NonFinite {
        context: String,
    },
    /// Bad configuration value (CLI or config file).
    Config {
        message: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parse {
                path,
                offset,
                message,
            } => write!(
                f,
                "parse error in {} at byte {}: {}",
                path.display(),
                offset,
                message
            ),
            Error::Io { path, source } => write!(f, "i/o error on {}: {}", path.display(), source),
            Error::DimMismatch { context, lhs, rhs } => write!(
                f,
                "{}: dimensions {}x{} vs {}x{} do not match",
                context, lhs.0, lhs.1, rhs.0, rhs.1
            ),
            Error::ImageTooSmall { height, width, min } => write!(
                f,
                "image {}x{} is smaller than the minimum supported size {}x{}",
                height, width, min, min
            ),
            Error::NonFinite { context } => write!(f, "non-finite value: {}", context),
            Error::Config { message } => write!(f, "config error: {}", message),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, offset: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Error::Config {
            message: message.into(),
        }
    }
}
