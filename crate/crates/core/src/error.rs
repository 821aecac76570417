use std::path::PathBuf;

use thiserror::Error;

/// Coarse classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed input that could not be parsed.
    Parse,
    /// Input parsed but violates a documented invariant or precondition.
    Invariant,
    /// The occlusion scorer failed or produced an unusable map.
    Scorer,
    /// Filesystem or other I/O failure.
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("run lengths sum to {actual}, expected {expected} ({width}x{height})")]
    LengthMismatch {
        expected: u64,
        actual: u64,
        width: u32,
        height: u32,
    },
    #[error("run {index} has zero length; only the first run may be empty")]
    ZeroInteriorRun { index: usize },
    #[error("negative run count {value} at index {index}")]
    NegativeCount { index: usize, value: i64 },
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: u32,
        left_height: u32,
        right_width: u32,
        right_height: u32,
    },
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("score {value} at pixel {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("{field} = {value} is outside [0, 1]")]
    RatioOutOfRange { field: &'static str, value: f64 },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("image count must be at least 1")]
    ZeroImages,
    #[error("sweep table is empty")]
    EmptyTable,

    #[error("window {window_width}x{window_height} does not fit in image {image_width}x{image_height}")]
    WindowLargerThanImage {
        window_width: u32,
        window_height: u32,
        image_width: u32,
        image_height: u32,
    },
    #[error("scorer failed: {0}")]
    ScorerFailure(String),
    #[error("no ground-truth pixels remain visible")]
    EmptyVisibleMask,

    #[error("could not place {what} after {attempts} attempts")]
    PlacementFailure { what: String, attempts: u32 },
    #[error("score separation {gap} is below the noise margin {margin}")]
    SeparationTooSmall { gap: f64, margin: f64 },

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: annotation {instance_id} references unknown image {image_id}")]
    DanglingImageRef {
        path: PathBuf,
        image_id: u64,
        instance_id: u64,
    },
    #[error("{path}: annotation {instance_id} on image {image_id}: {source}")]
    RleLengthMismatch {
        path: PathBuf,
        image_id: u64,
        instance_id: u64,
        #[source]
        source: Box<Error>,
    },
    #[error("{path}: {message}")]
    InvalidFile { path: PathBuf, message: String },
    #[error("{path}: bad magic, expected P5")]
    BadMagic { path: PathBuf },
    #[error("{path}: truncated data: expected {expected} bytes, found {found}")]
    TruncatedData {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("{path}: maxval {maxval} unsupported, only 65535 is accepted")]
    MaxvalUnsupported { path: PathBuf, maxval: u32 },
    #[error("no score map for image {image_id} (looked for {path})")]
    MissingScoreMap { image_id: u64, path: PathBuf },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Parse { .. } | Error::BadMagic { .. } | Error::TruncatedData { .. } => ErrorClass::Parse,
            Error::ScorerFailure(_) => ErrorClass::Scorer,
            Error::Io { .. } => ErrorClass::Io,
            _ => ErrorClass::Invariant,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
