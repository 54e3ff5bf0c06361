use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid probability {0}; expected a value in [0, 1]")]
    InvalidProbability(f64),

    #[error("observation set of size {size} is degenerate for {n} nodes (need 2 <= |S| < N)")]
    DegenerateSubset { n: usize, size: usize },

    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("negative self-weight {value:e} at node {node}")]
    NegativeSelfWeight { node: usize, value: f64 },

    #[error("row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("cannot factor stationary covariance: {0}")]
    Factorization(Box<Error>),

    #[error("I - A^2 is singular; the combination matrix is not stable")]
    SingularSystem,

    #[error("restricted correlation matrix [R_0]_S is singular")]
    SingularSubmatrix,

    #[error("empirical correlation [R_0]_S is singular; more samples are needed")]
    SingularEmpiricalCorrelation,

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("need at least 2 samples, got {0}")]
    InsufficientSamples(usize),

    #[error("LP for row {row} did not converge within {iterations} pivots")]
    SolverFailure { row: usize, iterations: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
