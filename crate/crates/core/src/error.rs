use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("product of monodromies deviates from identity by {residual:e}")]
    RejectsIdentityProductViolation { residual: f64 },
    #[error("permutation action is not transitive")]
    RejectsDisconnected,
    #[error("matrices are simultaneously diagonal")]
    SimultaneouslyDiagonal,
    #[error("matrix {index} is not a quasi-permutation matrix: {reason}")]
    NotQuasiPermutation { index: usize, reason: String },
    #[error("inconsistent branch data: {0}")]
    InconsistentBranchData(String),
    #[error("affine parameter system is singular (rank {rank}, expected {expected})")]
    SingularSystem { rank: usize, expected: usize },
    #[error("intersection indices unavailable for this topology: {0}")]
    UnsupportedTopology(String),
    #[error("branch points nearly collide (min separation {separation:e})")]
    NearDegenerateCurve { separation: f64 },
    #[error("path runs through branch point {0}")]
    PathThroughBranchPoint(String),
    #[error("continuation step underflow near {0}")]
    StepSizeUnderflow(String),
    #[error("imaginary part of period matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("theta truncation radius {radius} exceeds cap {cap}")]
    TruncationOverflow { radius: f64, cap: f64 },
    #[error("no non-singular odd characteristic found")]
    NoneFound,
    #[error("spinor section vanishes at the evaluation point")]
    SingularCharacteristic,
    #[error("theta value {ratio:e} relative to scale is below threshold (theta divisor)")]
    ThetaDivisorHit { ratio: f64 },
    #[error("Richardson extrapolation did not contract")]
    ExtrapolationUnstable,
    #[error("path passes through singular point {0}")]
    PathThroughSingularity(String),
    #[error("continuation drift {0:e} on a contractible loop")]
    ContinuationDrift(f64),
    #[error("finite difference unstable: {0}")]
    FiniteDifferenceUnstable(String),
    #[error("residue contour too close to another singularity")]
    ContourTooClose,
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("loop ordering is inconsistent with the product relation")]
    GeneratorOrder,
    #[error("malformed input at `{path}`: {msg}")]
    Malformed { path: String, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
}
