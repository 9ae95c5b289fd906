use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit categories
/// (config / solver / budget / data).
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates a documented constraint. Names the constraint.
    #[error("configuration error: {0}")]
    Config(String),

    /// An iterative solve failed to reach its tolerance. Carries the residual
    /// history tail for the report.
    #[error("solver error: {message} (last residuals: {history:?})")]
    Solver {
        message: String,
        history: Vec<f64>,
    },

    /// A Monte Carlo budget was exhausted before the estimator converged.
    #[error("budget error: {0}")]
    Budget(String),

    /// Simulated or imported data violates a structural requirement.
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn budget(msg: impl Into<String>) -> Self {
        Error::Budget(msg.into())
    }

    /// Exit-status category used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Solver { .. } => "solver",
            Error::Budget(_) => "budget",
            Error::Data(_) => "data",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
