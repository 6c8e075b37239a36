use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("sample grids do not match: {0}")]
    GridMismatch(String),

    #[error(transparent)]
    Integration(#[from] IntegrationError),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

/// Failure of the adaptive time stepper.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    StepBudget { t: f64, max_steps: usize },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}
