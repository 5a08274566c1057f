use thiserror::Error;

use crate::tracer::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice basis is singular (|det| = {det:e})")]
    SingularBasis { det: f64 },
    #[error("Fourier coefficients violate reality: {0}")]
    RealityViolation(String),
    #[error("too many Fourier terms: {count} > cap {cap}")]
    TooManyTerms { count: usize, cap: usize },
    #[error("level {level} is degenerate on the sampling grid; nudge the level")]
    DegenerateLevel { level: f64 },
    #[error("degenerate plane direction: {0}")]
    DegenerateDirection(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported dimension {0} for this operation")]
    UnsupportedDimension(usize),
    #[error("seed ({x}, {y}) could not be projected onto the level set")]
    SeedProjectionFailed { x: f64, y: f64 },
    #[error("step size collapsed away from any saddle after arc length {}", .partial.arc_length())]
    StagnantStep { partial: Box<Trajectory> },
    #[error("operation requires a rational direction")]
    NonRationalDirection,
    #[error("degenerate critical point at ({x}, {y}) on the level")]
    MultipleSaddleUnresolved { x: f64, y: f64 },
    #[error("no integer label within bound {bound}; best near miss {best:?} at {angle:e}")]
    NoLabelWithinBound {
        bound: i64,
        best: Option<Vec<i64>>,
        angle: f64,
    },
    #[error("closed trajectory intersects itself")]
    SelfIntersecting,
    #[error("asymptotic directions disagree (max pairwise angle {max_angle} rad)")]
    DirectionsDisagree { max_angle: f64, angles: Vec<f64> },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint does not match configuration ({expected} != {found})")]
    ChecksumMismatch { expected: String, found: String },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
