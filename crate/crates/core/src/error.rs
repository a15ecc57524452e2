use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected} entries, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("particles {i} and {j} are coincident")]
    CoincidentParticles { i: usize, j: usize },

    /// The constraint solver hit its iteration limit.
    #[error("constraint solver did not converge after {iterations} iterations (worst residual {residual:e})")]
    ConstraintNonConvergence { iterations: usize, residual: f64 },

    /// The input state is not on the constraint manifold.
    #[error("state violates the constraints: {level} residual {residual:e} exceeds tolerance {tolerance:e}")]
    ConstraintViolation {
        level: &'static str,
        residual: f64,
        tolerance: f64,
    },

    #[error("constraint jacobian is numerically singular")]
    SingularConstraintJacobian,

    #[error("system has no unconstrained harmonic bonds")]
    NoBonds,

    #[error(
        "step size {dt} is unstable for every two-stage integrator (h_bar = {h_bar:.6} >= 4); \
         the admissible step size must satisfy dt < sqrt(2)*T/pi = {max_dt:.6}"
    )]
    UnstableStepSize { dt: f64, h_bar: f64, max_dt: f64 },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("system has no degrees of freedom")]
    ZeroDof,

    #[error("need at least {needed} frames, got {found}")]
    TooFewFrames { needed: usize, found: usize },

    #[error("series is empty")]
    EmptySeries,

    #[error("energy became non-finite at step {step}")]
    NonFiniteEnergy { step: usize },
}
