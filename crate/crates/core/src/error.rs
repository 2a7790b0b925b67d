use thiserror::Error;

/// Errors produced by the decomposition, estimator, risk and Monte Carlo layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDims(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("degenerate spectrum at eigenvalue pair ({0}, {1})")]
    DegeneratePair(usize, usize),

    #[error("eigenvalue {0} is numerically zero")]
    ZeroEigenvalue(usize),

    #[error("zero singular value at index {0} with nonzero shrinkage coefficient")]
    Singular(usize),

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid shrinkage coefficients: {0}")]
    InvalidCoefficients(String),

    #[error("unknown estimator label `{label}` (valid: mle, em, stein, em+, stein+, custom:c1,...,cp)")]
    UnknownEstimator { label: String },

    #[error("no analytic risk formula for estimator `{0}`")]
    NoAnalyticRisk(String),

    #[error("rejection rate too high: {rejects} rejected draws over {reps} replications")]
    TooManyRejections { rejects: u64, reps: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
