use std::path::PathBuf;

use thiserror::Error;

use crate::model::Anchor;
use crate::provider::ProviderError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("path escapes the repository root: {0:?}")]
    PathEscape(String),
    #[error("anchor {anchor} out of bounds for document of length {len}")]
    OutOfBounds { anchor: Anchor, len: usize },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("document {path} changed since its annotations were last synchronized")]
    StaleDocument { path: String },
    #[error("proposal for tag {tag} was computed against a different document version")]
    StaleProposal { tag: String },
    #[error("not found: {0}")]
    NotFound(String),
    #[error("{0}")]
    Ambiguous(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed annotation file: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{}: format version {found} is newer than supported version {supported}", path.display())]
    UnsupportedVersion {
        path: PathBuf,
        found: u64,
        supported: u32,
    },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used on the wire and in FFI status mapping.
    pub fn code(&self) -> &'static str {
        match self {
            Error::PathEscape(_) => "path_escape",
            Error::OutOfBounds { .. } => "out_of_bounds",
            Error::Invalid(_) => "invalid",
            Error::Precondition(_) => "precondition",
            Error::StaleDocument { .. } => "stale_document",
            Error::StaleProposal { .. } => "stale_proposal",
            Error::NotFound(_) => "not_found",
            Error::Ambiguous(_) => "ambiguous",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::Provider(ProviderError::Unavailable) => "provider_unavailable",
            Error::Provider(_) => "provider",
        }
    }
}
