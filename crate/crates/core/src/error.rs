use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WimError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("color images are not supported ({0}); convert to grayscale first")]
    ColorImage(String),

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("image size {width}x{height} is not divisible by 2^{levels}")]
    NotDivisible {
        width: usize,
        height: usize,
        levels: usize,
    },

    #[error("malformed wavelet pyramid: {0}")]
    MalformedPyramid(String),

    #[error("coefficient layout mismatch between pyramid and mask")]
    LayoutMismatch,

    #[error("subband {0} does not exist in this layout")]
    NoSuchSubband(String),

    #[error("no known LL coefficient: cannot interpolate the LL subband")]
    NoKnownLowpass,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-local weight graph does not match the image ({0})")]
    GraphMismatch(String),

    #[error("the NL-TV regularizer requires a weight graph")]
    MissingGraph,

    #[error("solver aborted at outer iteration {iteration}: non-finite value in {stage}")]
    NonFinite { iteration: usize, stage: &'static str },

    #[error("malformed mask file: {0}")]
    MaskFormat(String),
}

pub type Result<T> = std::result::Result<T, WimError>;

impl WimError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        WimError::Io {
            path: path.into(),
            source,
        }
    }
}
