use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("manifest error at {path}:{line}: {reason}")]
    Manifest {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("rectangle ({x},{y}) {w}x{h} exceeds image bounds {width}x{height}")]
    OutOfBounds {
        x: u32,
        y: u32,
        w: u32,
        h: u32,
        width: u32,
        height: u32,
    },

    #[error("no gray pixels detected: no valid candidates survive contrast flooring")]
    NoGrayPixels,

    #[error("zero-norm vector where a direction is required")]
    ZeroVector,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("estimator undefined: {0}")]
    Degenerate(String),
}
