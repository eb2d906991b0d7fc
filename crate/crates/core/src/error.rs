use thiserror::Error;

/// Errors raised by measure construction, kernels, transport solvers, sketching and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("weights sum to {0}, expected a positive finite total")]
    ZeroMass(f64),

    #[error("ragged input: row {row} has dimension {got}, expected {expected}")]
    RaggedDimensions { row: usize, expected: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("direction is not unit norm (norm = {0})")]
    NonUnitDirection(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported kernel: {0}")]
    UnsupportedKernel(String),

    #[error("kernel is not twice differentiable at zero: {0}")]
    NonSmoothAtZero(String),

    #[error("squared MMD {value} is negative beyond round-off (gram scale {scale}); kernel is not positive semi-definite")]
    NonPsd { value: f64, scale: f64 },

    #[error("transport size guard exceeded: {n} x {m} > {limit}")]
    SizeGuard { n: usize, m: usize, limit: usize },

    #[error("brute-force oracle needs uniform equal-size measures with at most 8 atoms: {0}")]
    BruteForcePrecondition(String),

    #[error("degenerate grid: {0}")]
    DegenerateGrid(String),

    #[error("feature maps differ (seed, kernel or frequencies)")]
    MismatchedFeatureMaps,

    #[error("hypothesis violates its constraint: {0}")]
    ConstraintViolation(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureNonConvergence(String),

    #[error("means differ by {0}; the bound requires equal means")]
    MismatchedMeans(f64),

    #[error("supports overlap (min pairwise distance {0})")]
    OverlappingSupports(f64),

    #[error("moment precondition violated: {0}")]
    MomentViolation(String),

    #[error("unknown format tag {0:?}")]
    UnknownFormat(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
