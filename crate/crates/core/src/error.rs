use thiserror::Error;

use crate::equilibria::EquilibriumType;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("back-substitution matrix is singular at S = {s}")]
    SingularLinearSystem { s: f64 },

    #[error("degenerate division: {0}")]
    DivisionDegenerate(&'static str),

    #[error("eigenvalue iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("coexistence regularity (dP/dS > 0) fails at the bifurcation point K = {k}")]
    AssumptionIIFailure { k: f64 },

    #[error("continuation stalled; last converged K = {last_k}")]
    ContinuationStall { last_k: f64 },

    #[error("no stability crossing on the scanned range (marginal: {marginal})")]
    NoCrossing { marginal: bool },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("no admissible equilibrium of type {kind} at K = {k}")]
    MissingEquilibrium { kind: EquilibriumType, k: f64 },
}

impl Error {
    /// Parameter/assumption problems, as opposed to numerical breakdowns.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidParameter { .. }
                | Error::AssumptionViolation(_)
                | Error::AssumptionIIFailure { .. }
                | Error::DivisionDegenerate(_)
        )
    }
}
