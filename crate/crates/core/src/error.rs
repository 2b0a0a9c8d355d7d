use thiserror::Error;

/// Errors surfaced by simulator, mean-field and evaluator entry points.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("invalid time: {0}")]
    InvalidTime(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature failure: best estimate {estimate} with error bound {error_bound} (requested {requested})")]
    QuadratureFailure {
        estimate: f64,
        error_bound: f64,
        requested: f64,
    },

    #[error("system too large: {0}")]
    SystemTooLarge(String),

    #[error("boundary mass too large: {0}")]
    BoundaryMassTooLarge(String),

    #[error("insufficient observables: {0}")]
    InsufficientObservables(String),
}

pub type Result<T> = std::result::Result<T, Error>;
