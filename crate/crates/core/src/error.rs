use thiserror::Error;

/// Errors raised by instance validation, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("best arm is not unique: arms {first} and {second} share the maximal mean")]
    NonUniqueBestArm { first: usize, second: usize },

    #[error("domain violation: {0}")]
    DomainViolation(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("gradient undefined for scenario {scenario}: allocation is at a nonsmooth point")]
    NonsmoothPoint { scenario: usize },

    #[error("scenario {scenario} lies outside the active feature span")]
    ScenarioOutOfSpan { scenario: usize },

    #[error("Cholesky factorization of the posterior covariance failed")]
    CholeskyFailure,

    #[error("grid has {points} lattice points, limit is {limit}")]
    TooManyGridPoints { points: u128, limit: u128 },

    #[error("invalid simplex point: {0}")]
    InvalidSimplex(String),

    #[error("replications have misaligned record schedules")]
    MisalignedSchedules,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from a bad configuration or instance rather
    /// than from a numerical failure during a run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::NonUniqueBestArm { .. }
                | Error::DomainViolation(_)
                | Error::DimensionMismatch(_)
                | Error::InvalidSimplex(_)
                | Error::TooManyGridPoints { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
