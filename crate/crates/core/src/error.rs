use thiserror::Error;

/// Errors produced by the solvers, analysis routines and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("inconsistent equation (least-squares residual {residual:.3e})")]
    InconsistentEquation { residual: f64 },

    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Every projector is the identity, so there is nothing to quotient.
    #[error("degenerate quotient: intersection of projector images is the whole space")]
    DegenerateQuotient,

    #[error("graph sequence too short: need at least {needed} graphs, got {got}")]
    InsufficientLength { needed: usize, got: usize },

    #[error("agent {agent} drifted off its constraint (residual {residual:.3e})")]
    FeasibilityDrift { agent: usize, residual: f64 },

    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),

    #[error("rank deficient: {0}")]
    RankError(String),

    #[error("singular matrix: {0}")]
    Singular(String),

    #[error("time {t} is beyond the schedule horizon {horizon}")]
    HorizonExceeded { t: u64, horizon: u64 },

    /// Configuration problems, reported with the offending field path.
    #[error("invalid config at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::ContractViolation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
