use std::path::PathBuf;

use crate::tensor_io::Category;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic bytes {found:?}, expected \"HRTN\"")]
    BadMagic { found: [u8; 4] },

    #[error("unsupported tensor format version {0}")]
    UnsupportedVersion(u32),

    #[error("truncated tensor file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },

    #[error("{0} trailing bytes after tensor payload")]
    TrailingBytes(u64),

    #[error("non-finite value at flat index {index}")]
    NonFinite { index: usize },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("bundle is missing required member `{0}`")]
    MissingMember(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("invalid profile bank: {0}")]
    InvalidBank(String),

    #[error("rejected configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample `{0}` has no energy vector")]
    MissingEnergy(String),

    #[error("calibration set has no {0} samples")]
    EmptyCategory(Category),

    #[error("infeasible generator spec: {0}")]
    InfeasibleSpec(String),

    #[error("method `{0}` is not supported")]
    Unsupported(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by unreadable, missing, or malformed inputs,
    /// as opposed to well-formed inputs that violate a domain invariant.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::BadMagic { .. }
                | Error::UnsupportedVersion(_)
                | Error::Truncated { .. }
                | Error::TrailingBytes(_)
                | Error::MissingMember(_)
                | Error::Manifest(_)
                | Error::MissingEnergy(_)
                | Error::InvalidArgument(_)
                | Error::Unsupported(_)
        )
    }
}
