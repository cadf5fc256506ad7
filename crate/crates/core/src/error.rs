use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {}", .0.join("; "))]
    InvalidMdp(Vec<String>),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("horizon T = {t} is below the floor max(2, S, A) = {floor}")]
    HorizonTooShort { t: usize, floor: usize },

    #[error("non-finite solver input: {0}")]
    NonFinite(&'static str),

    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("loss script exhausted at episode {0}")]
    ScriptExhausted(usize),

    #[error("operation requires a stochastic loss process")]
    NotStochastic,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by bad user input rather than a failure while running.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidMdp(_)
                | Error::InvalidParameter(_)
                | Error::HorizonTooShort { .. }
                | Error::Config(_)
                | Error::Json(_)
                | Error::Csv(_)
                | Error::Io(_)
        )
    }
}
