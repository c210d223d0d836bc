use thiserror::Error;

/// Errors raised by the estimation, testing and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("rank deficient design: smallest/largest |R_ii| = {ratio:.3e} (collinear columns?)")]
    RankDeficient { ratio: f64 },

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("index {index} out of range for {len} test assets")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("test not applicable: {0}")]
    NotApplicable(String),

    #[error("sample covariance matrix is singular")]
    SingularCovariance,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("empty input")]
    EmptyInput,

    #[error("weights sum to {0}, expected 1")]
    WeightSumViolation(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl Error {
    /// True for failures that mean "this test cannot be computed on this
    /// panel" rather than "the input is malformed".
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NotApplicable(_)
                | Error::SingularCovariance
                | Error::NotPositiveDefinite
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
