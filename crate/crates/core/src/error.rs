use thiserror::Error;

/// Errors produced by the tracking toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{name} must be positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        name: &'static str,
        min_eigenvalue: f64,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} is rank deficient: rank {rank}, need {required}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        required: usize,
    },

    #[error("singular matrix in {context}")]
    Singular { context: &'static str },

    #[error("observer error dynamics are unstable: spectral radius of A - LC is {spectral_radius}")]
    UnstableObserver { spectral_radius: f64 },

    #[error("gain is not stabilizing: spectral radius of the closed loop is {spectral_radius}")]
    NotStabilizing { spectral_radius: f64 },

    #[error("Lyapunov iteration did not converge after {iterations} sweeps (discounted spectral radius {spectral_radius})")]
    LyapunovDivergence {
        iterations: usize,
        spectral_radius: f64,
    },

    #[error("{what} did not converge within {iterations} iterations (last change {last_delta:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        last_delta: f64,
    },

    #[error("trajectory left the envelope at step {step}: |value| = {magnitude:e} > {limit:e}")]
    Diverged {
        step: usize,
        magnitude: f64,
        limit: f64,
    },

    #[error("Cholesky factorization failed with jitter up to {jitter:e}")]
    CholeskyFailed { jitter: f64 },

    #[error("H_uu block of the kernel is singular")]
    SingularHuu,

    #[error("not enough samples: {available} available, {required} required")]
    InsufficientData { available: usize, required: usize },

    #[error("horizon {horizon} exceeds trace length {len}")]
    HorizonTooLong { horizon: usize, len: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn dim_err(context: &'static str, expected: impl ToString, actual: impl ToString) -> Error {
    Error::Dimension {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
