use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("corrupt header: {0}")]
    CorruptHeader(String),

    #[error("unsupported bit depth: {0}")]
    UnsupportedBitDepth(u8),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("bad magic: expected \"DCCF\"")]
    BadMagic,

    #[error("unsupported stack version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("truncated data: {0}")]
    Truncated(String),

    #[error("non-finite loss at iteration {iteration} (parameter channel {channel})")]
    NonFinite { iteration: usize, channel: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn check_dims(expected: (usize, usize), actual: (usize, usize)) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, actual })
        }
    }
}
