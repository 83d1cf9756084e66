use thiserror::Error;

/// Errors produced by the wishartlab kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("matrix contains NaN or infinite entries")]
    NonFinite,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("sigma flow routes disagree (relative difference {rel_diff:e})")]
    QuadratureDivergence { rel_diff: f64 },

    #[error("I + u*sigma is numerically singular")]
    SingularResolvent,

    #[error("no exact sampler for these parameters: {0}")]
    UnsupportedShape(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("matrix is not invertible")]
    NotInvertible,

    #[error("convolution requires equal scale parameters")]
    ScaleMismatch,

    #[error("gamma function pole: argument {arg} <= 0")]
    PoleError { arg: f64 },

    #[error("partition weight {weight} exceeds configured maximum {max}")]
    WeightOverflow { weight: usize, max: usize },

    #[error("density hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("transition law has no Lebesgue density (shape or Kalman rank gate failed)")]
    NoDensity,

    #[error("invalid time grid: {0}")]
    GridError(String),

    #[error("shape error: {0}")]
    ShapeError(String),

    #[error("state at step {step} is singular")]
    SingularState { step: usize },

    #[error("precondition violated: {0}")]
    PreconditionViolation(String),

    #[error("empty sample batch")]
    EmptyBatch,
}

impl Error {
    /// Stable machine-readable identifier used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPsd { .. } => "NotPsd",
            Error::NonFinite => "NonFinite",
            Error::NotSymmetric { .. } => "NotSymmetric",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::QuadratureDivergence { .. } => "QuadratureDivergence",
            Error::SingularResolvent => "SingularResolvent",
            Error::UnsupportedShape(_) => "UnsupportedShape",
            Error::InvalidParams(_) => "InvalidParams",
            Error::NotInvertible => "NotInvertible",
            Error::ScaleMismatch => "ScaleMismatch",
            Error::PoleError { .. } => "PoleError",
            Error::WeightOverflow { .. } => "WeightOverflow",
            Error::HypothesisViolation(_) => "HypothesisViolation",
            Error::NoDensity => "NoDensity",
            Error::GridError(_) => "GridError",
            Error::ShapeError(_) => "ShapeError",
            Error::SingularState { .. } => "SingularState",
            Error::PreconditionViolation(_) => "PreconditionViolation",
            Error::EmptyBatch => "EmptyBatch",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
