use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates an operation's precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// An argument lies outside the domain where the quantity is finite or defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Requested QSD member is not a probability density.
    #[error("non-normalizable profile: r = {r} exceeds c^2/2 = {limit} for c = {c}")]
    NonNormalizable { c: f64, r: f64, limit: f64 },

    /// Every particle (or all probability mass) was absorbed.
    #[error("extinction at {at}")]
    Extinction { at: String },

    /// An iterative method or discretization failed to reach its target.
    #[error("numerical failure: {msg} (attained {attained:e})")]
    Numerical { msg: String, attained: f64 },

    /// Matrix structure does not satisfy the solver's assumptions.
    #[error("structure error: {0}")]
    Structure(String),

    /// Branching population exceeded its cap.
    #[error("population exceeded cap {cap} at t = {t}")]
    Growth { cap: usize, t: f64 },
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
