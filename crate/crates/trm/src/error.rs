use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems with the bytes of a binary file, independent of where it lives.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated while reading {0}")]
    Truncated(&'static str),
    #[error("{0} is not valid UTF-8")]
    InvalidUtf8(&'static str),
    #[error("{0} does not fit the format")]
    TooLarge(&'static str),
    #[error("trailing bytes after the last record")]
    TrailingBytes,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] trm_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}: {source}", path.display())]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    /// A format error from an in-memory or unnamed stream.
    #[error(transparent)]
    Decode(#[from] FormatError),
    #[error("{0}")]
    Invalid(String),
}

impl Error {
    pub(crate) fn io(path: &Path) -> impl FnOnce(io::Error) -> Error + '_ {
        move |source| Error::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn format(path: &Path) -> impl FnOnce(FormatError) -> Error + '_ {
        move |source| Error::Format {
            path: path.to_path_buf(),
            source,
        }
    }

    /// Attaches `path` to a stream-level format error.
    pub(crate) fn at(self, path: &Path) -> Error {
        match self {
            Error::Decode(source) => Error::Format {
                path: path.to_path_buf(),
                source,
            },
            e => e,
        }
    }

    /// Short category for diagnostics: `numerical`, `io` or `validation`.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Core(e) if e.is_numerical() => "numerical",
            Error::Io { .. } => "io",
            _ => "validation",
        }
    }

    /// Process exit status: 3 for numerical failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.kind() == "numerical" {
            3
        } else {
            2
        }
    }
}
