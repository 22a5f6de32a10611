use thiserror::Error;

/// Errors surfaced by validation, estimation and simulation routines.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("covariate rows have inconsistent dimensions: expected {expected}, subject {index} has {found}")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        index: usize,
    },
    #[error("subject {index} has non-positive observed time {time}")]
    NonPositiveTime { index: usize, time: f64 },
    #[error("sample contains no events (all subjects censored)")]
    NoEvents,
    #[error("non-finite value in {what} at subject {index}")]
    NonFiniteValue { what: &'static str, index: usize },
    #[error("no subject at risk beyond t0 = {t0}")]
    EmptyRiskSet { t0: f64 },
    #[error("vector length {found} does not match sample size {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("multiplier {index} is not strictly positive")]
    NonPositiveMultiplier { index: usize },
    #[error("pseudo-observation bound M = {big_m} is too small at the evaluated coefficients")]
    BigMTooSmall { big_m: f64 },
    #[error("smoothing scale x'Hx <= 0 for effective subject {index}")]
    ZeroSmoothingScale { index: usize },
    #[error("slope matrix is singular to working precision")]
    SingularSlope,
    #[error("Newton iteration did not converge within {max_iter} iterations")]
    MaxIterExceeded { max_iter: usize },
    #[error("model unidentifiable: {reason}")]
    Unidentifiable { reason: String },
    #[error("covariance update lost positive definiteness")]
    NonPositiveDefiniteSigma,
    #[error("all perturbation replicates produced identical scores")]
    DegenerateResamples,
    #[error("residual quantile is non-positive at t0 = {t0}")]
    NonPositiveResidualQuantile { t0: f64 },
    #[error("requested censoring proportion {target} is unreachable")]
    TargetUnreachable { target: f64 },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
}

pub type Result<T> = std::result::Result<T, Error>;
