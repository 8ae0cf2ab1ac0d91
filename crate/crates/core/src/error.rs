use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input scale p must be non-zero")]
    DegenerateScale,

    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("empty input")]
    Empty,

    #[error("non-finite input at index {index}")]
    NonFinite { index: usize },

    #[error("buffer of length {len} is not divisible into rows of {cols}")]
    ShapeMismatch { len: usize, cols: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("malformed buffer file: {0}")]
    Format(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    /// True for errors caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
