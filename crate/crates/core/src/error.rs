use std::io;

use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate triangle: barycentric coordinates are undefined")]
    DegenerateTriangle,

    #[error("matrix is not symmetric positive semi-definite: {0}")]
    NotSpd(String),

    #[error("all {0} anchors are collinear")]
    CollinearAnchors(usize),

    #[error("duplicate anchors at indices {first} and {second}")]
    DuplicateAnchors { first: usize, second: usize },

    #[error("invalid anchor frame: {0}")]
    InvalidFrame(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("not a flow file (magic {0:?})")]
    BadMagic([u8; 4]),

    #[error("truncated flow payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("bad parameter record: {0}")]
    BadParams(String),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
