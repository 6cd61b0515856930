use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },

    #[error("grid pitch {pitch:e} m exceeds a third of the coherence length {coherence_length:e} m")]
    UndersampledGrid { pitch: f64, coherence_length: f64 },

    #[error("invalid correlation order N={order}, n={split}: need N >= 2 and 1 <= n <= N-1")]
    InvalidOrder { order: u32, split: u32 },

    #[error("geometry does not fit on the grid: {0}")]
    GeometryTooLargeForGrid(String),

    #[error("malformed file at byte offset {offset}: {reason}")]
    MalformedFile { offset: u64, reason: String },

    #[error("unsupported frame file version {found} (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("arm distances differ (z1 = {z1} m, z2 = {z2} m); only the lensless z1 = z2 geometry is modeled")]
    UnequalArms { z1: f64, z2: f64 },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("propagation over {z} m aliases the transfer function (sampling ratio {ratio:.3} > 1)")]
    AliasedPropagation { z: f64, ratio: f64 },

    #[error("length mismatch: {what} has {left} entries but {right} were expected")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("mean reference intensity is zero at pixel (row {row}, col {col})")]
    ZeroMeanPixel { row: usize, col: usize },

    #[error("mean of {0} is zero")]
    ZeroMean(&'static str),

    #[error("image is zero everywhere")]
    AllZeroImage,

    #[error("accumulator pass violation: {0}")]
    PassOrderViolation(&'static str),

    #[error("cannot merge accumulators: {0}")]
    IncompatibleAccumulators(&'static str),

    #[error("{0} region is empty")]
    EmptyRegion(&'static str),

    #[error("no correlation peak: height {height:.4} above plateau is below 3 standard errors ({threshold:.4})")]
    PeakNotFound { height: f64, threshold: f64 },

    #[error("too few frames: {frames} frames cannot fill {blocks} blocks of at least 2")]
    TooFewFrames { frames: usize, blocks: usize },

    #[error("{0} has zero variance")]
    ZeroVariance(&'static str),

    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },

    #[error("line {line}: cannot parse `{value}` as {expected}")]
    BadUnit {
        line: usize,
        value: String,
        expected: &'static str,
    },

    #[error("missing required key `{0}`")]
    MissingRequired(&'static str),

    #[error("{key} = {value} is out of range: {reason}")]
    RangeError {
        key: &'static str,
        value: String,
        reason: &'static str,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Tags an error with the pipeline stage that produced it.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| match e {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}
