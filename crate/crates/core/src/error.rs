use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The request is valid but exceeds what the dense or exact paths can hold.
    #[error("capacity error: {0}")]
    Capacity(String),

    #[error("update law `{0}` is not exchangeable; use the per-subset eigenvalues instead")]
    NotExchangeable(&'static str),

    /// Preconditions of a bound or asymptotic regime are not met.
    #[error("regime error: {0}")]
    Regime(String),

    #[error("distance never fell to {epsilon} within {ceiling} steps ({reason})")]
    Divergent {
        epsilon: f64,
        ceiling: u64,
        reason: String,
    },

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("verification failed: {0}")]
    Verification(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Domain(_) | Error::Regime(_) | Error::NotExchangeable(_) => 2,
            Error::Verification(_) => 3,
            Error::Capacity(_) => 4,
            Error::Divergent { .. } | Error::Io(_) | Error::Csv(_) | Error::Json(_) => 1,
        }
    }
}
