use thiserror::Error;

/// Errors raised by constructors and operations in this crate.
///
/// Check *failures* (a POVM that is not normalized, a kernel that cannot be
/// extracted) are reported as data, not as errors. These variants cover
/// rejected inputs only.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("operator is not Hermitian: max |A - A^dagger| entry = {defect:e} exceeds {tol:e}")]
    NotHermitian { defect: f64, tol: f64 },

    #[error("operator is not an effect: spectrum [{min:e}, {max:e}] leaves [0, 1] beyond tolerance")]
    NotAnEffect { min: f64, max: f64 },

    #[error("zero operator has no maximizing state")]
    NoMaximizer,

    #[error("state vector has zero norm")]
    ZeroVector,

    #[error("atom index {index} out of range for outcome space of {len} atoms")]
    AtomOutOfRange { index: usize, len: usize },

    #[error("invalid outcome space: {0}")]
    InvalidSpace(String),

    #[error("outcome space is not a product of position and momentum atoms")]
    NotProductSpace,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("normalization defect {defect:e} exceeds threshold {threshold:e}")]
    NotNormalized { defect: f64, threshold: f64 },

    #[error(
        "truncation inadequate: normalization defect {defect:e} exceeds threshold {threshold:e} \
         (try half_width >= {suggested_half_width} or fock_dim <= {suggested_fock_dim})"
    )]
    TruncationInadequate {
        defect: f64,
        threshold: f64,
        suggested_half_width: f64,
        suggested_fock_dim: usize,
    },

    #[error("markov kernel row {row} sums to {sum} (tolerance {tol:e})")]
    KernelRowSum { row: usize, sum: f64, tol: f64 },

    #[error("markov kernel entry ({row}, {col}) = {value} lies outside [0, 1]")]
    KernelEntry { row: usize, col: usize, value: f64 },

    #[error("base observable is not projective: {0}")]
    NotProjective(String),

    #[error("invalid refinement sequence: {0}")]
    InvalidRefinement(String),

    #[error("scaling fit needs at least 2 levels, got {0}")]
    TooFewLevels(usize),

    #[error("mismatched Weyl system: {0}")]
    MismatchedSystem(String),

    #[error("serialization: {0}")]
    Serialization(String),
}

pub type Result<T> = std::result::Result<T, Error>;
