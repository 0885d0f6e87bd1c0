use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation (negative lifetime, zero field, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition of the operation was not met by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// The integrator lost unitarity beyond tolerance; the step is too large.
    #[error("step size too large: {what} = {value:.3e} exceeds {tolerance:.1e} (dt = {dt:.3e})")]
    StepSize {
        what: &'static str,
        value: f64,
        tolerance: f64,
        dt: f64,
    },

    /// NaN/Inf or a failed decomposition.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
