use thiserror::Error;

/// Errors raised by the model, solvers, integrator and continuation drivers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain where a formula is defined.
    /// `limit` carries the one-sided limit when the formula has a finite one.
    #[error("{what}: argument {value} outside the domain of definition")]
    Domain {
        what: &'static str,
        value: f64,
        limit: Option<f64>,
    },

    #[error("{what} is singular for the given parameters")]
    SingularParameter { what: &'static str },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("Jacobian is singular (condition estimate {condition:e})")]
    SingularJacobian { condition: f64 },

    #[error("step size underflow at t = {t} (step {step:e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("trajectory too short for attractor classification ({duration} time units)")]
    TooShort { duration: f64 },

    #[error("corrector diverged: {0}")]
    CorrectorDivergence(String),

    #[error("lost the bracket while refining a {0}")]
    LostBracket(&'static str),

    #[error("cycle and reference use different meshes")]
    MeshMismatch,

    #[error("collocation Newton did not converge: {0}")]
    NoConvergence(String),

    #[error("monodromy assembly ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("no Bogdanov-Takens point: the Hopf condition has no root in k")]
    NoBt,
}

pub type Result<T> = std::result::Result<T, Error>;
