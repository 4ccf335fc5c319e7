use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: [usize; 3],
        right: [usize; 3],
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("underdetermined fit: need at least {needed} points, got {got}")]
    Underdetermined { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("degenerate cycle: end-diastole and end-systole fall on phase {phase}")]
    DegenerateCycle { phase: u32 },

    #[error("kernel matrix not positive definite (amplitude={amplitude}, length_scale={length_scale}, jitter={jitter})")]
    NotPositiveDefinite {
        amplitude: f64,
        length_scale: f64,
        jitter: f64,
    },

    #[error("missing intensity volumes")]
    MissingIntensity,

    #[error("ellipsoid exceeds grid bounds: {0}")]
    OutOfBounds(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("size mismatch in {path}: expected {expected} bytes, found {found}")]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("non-binary mask voxel value {value} in {path} at offset {offset}")]
    NonBinary {
        path: PathBuf,
        offset: usize,
        value: u8,
    },

    #[error("unknown schema_version {0:?}")]
    UnknownSchema(String),

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that originate from the filesystem or file contents.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::MissingFile(_)
                | Error::SizeMismatch { .. }
                | Error::NonBinary { .. }
                | Error::UnknownSchema(_)
                | Error::Manifest(_)
                | Error::Io(_)
        )
    }
}
