use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid weight function: {0}")]
    InvalidWeights(String),

    #[error("invalid occupancy model: {0}")]
    InvalidModel(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// The normalizing constant of an M^(a) model vanished, so the model is empty.
    #[error("normalizing constant C(n={n}, r={r}) is zero")]
    ZeroNormalizer { n: usize, r: usize },

    #[error("conditioning event has probability zero: {0}")]
    ZeroProbability(String),

    #[error("enumeration of {count} items exceeds the cap of {cap}")]
    ResourceCap { count: String, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible MaxEnt target: {0}")]
    Infeasible(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable name used in JSON error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidWeights(_) => "invalid_weights",
            Error::InvalidModel(_) => "invalid_model",
            Error::Domain(_) => "domain",
            Error::ZeroNormalizer { .. } => "zero_normalizer",
            Error::ZeroProbability(_) => "zero_probability",
            Error::ResourceCap { .. } => "resource_cap",
            Error::Precondition(_) => "precondition",
            Error::Infeasible(_) => "infeasible",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Parse(_) => "parse",
        }
    }
}
