use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("dims/payload mismatch: dims imply {expected} bytes, payload has {found}")]
    PayloadMismatch { expected: usize, found: usize },

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("index {index:?} out of range for dims {dims:?}")]
    IndexOutOfRange { index: [usize; 3], dims: [usize; 3] },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate triangle (area {area:e} mm^2)")]
    DegenerateTriangle { area: f64 },

    #[error("empty mesh")]
    EmptyMesh,

    #[error("vertex {0} is not referenced by any face")]
    IsolatedVertex(usize),

    #[error("non-watertight mesh: {disagreeing} of {total} voxels have inconsistent ray parity")]
    NonWatertight { disagreeing: usize, total: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
