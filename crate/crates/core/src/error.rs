use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid cost: {0}")]
    InvalidCost(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error(
        "rejection budget exceeded after {attempts} attempts for one draw \
         (empirical acceptance rate {rate:.3e})"
    )]
    BudgetExceeded { attempts: u64, rate: f64 },

    #[error(
        "penalty bounds invalid: acceptance probability clamped on {clamped} of {proposed} \
         proposals (fraction {fraction:.3e} > 1e-3)"
    )]
    BoundsInvalid { clamped: u64, proposed: u64, fraction: f64 },

    #[error("non-finite integrand values at indices {0:?}")]
    NonFiniteIntegrand(Vec<usize>),

    #[error("rank-deficient design matrix; deficient directions: {0}")]
    RankDeficient(String),

    #[error(
        "empty posterior: no proposal within epsilon {epsilon}; \
         distance quantiles (min, 1%, 5%, 50%) = {quantiles:?}"
    )]
    EmptyPosterior { epsilon: f64, quantiles: [f64; 4] },

    #[error("simulator `{simulator}` failed: {message}")]
    Simulator { simulator: String, message: String },

    #[error("quadrature did not converge: achieved error {achieved:.3e}, requested {requested:.3e}")]
    Quadrature { achieved: f64, requested: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
