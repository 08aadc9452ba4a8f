use thiserror::Error;

pub type Result<T, E = ShapeError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ShapeError {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("point is not on the manifold part (rank {rank} < {required})")]
    NotOnManifold { rank: usize, required: usize },
    #[error("datum too close to the cut locus (distance {distance:.4} >= limit {limit:.4})")]
    CutLocus { distance: f64, limit: f64 },
    #[error("too few data: need at least {needed}, got {got}")]
    TooFewData { needed: usize, got: usize },
    #[error("{excluded} of {total} data excluded near the cut locus (more than 10%)")]
    ExcessiveExclusions { excluded: usize, total: usize },
    #[error("degenerate test: {0}")]
    DegenerateTest(String),
    #[error("mean is not unique: eigenvalue gap {gap:e} below tolerance")]
    NonUniqueMean { gap: f64 },
    #[error("matrix is not positive semi-definite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("pull-back undefined: mean falls into a_mm < 0 region (a_mm = {value:e})")]
    PullBackUndefined { value: f64 },
    #[error("invalid frustum basis: {0}")]
    InvalidBasis(String),
    #[error("zero-length geodesic segment")]
    ZeroLength,
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),
    #[error("mean solver failed in replicate {replicate}: {reason}")]
    SolverFailure { replicate: usize, reason: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
