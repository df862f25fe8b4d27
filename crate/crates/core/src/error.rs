use thiserror::Error;

/// Errors produced anywhere in the discovery pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("solver blow-up: non-finite value at x = {x}, t = {t}")]
    SolverBlowUp { x: f64, t: f64 },

    #[error("stiffness failure: integration unstable after t = {last_stable_t}")]
    Stiffness { last_stable_t: f64 },

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("zero column for term `{term}` at step {step}")]
    ZeroColumn { term: String, step: usize },

    #[error("singular per-step Gram at step {step}; use a positive ridge penalty")]
    SingularGram { step: usize },

    #[error("conditional covariance of group {group} is not positive definite")]
    NotPositiveDefinite { group: usize },

    #[error("sigma^2 diverged (value {0})")]
    SigmaDiverged(f64),

    #[error("empty ensemble or too few draws ({0})")]
    EmptyEnsemble(usize),

    #[error("term `{0}` is not in the library")]
    MissingTerm(String),

    #[error("group {0} has zero norm but is marked active")]
    InconsistentMask(usize),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("format: {0}")]
    Format(String),
}

impl Error {
    /// Numerical failures (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SolverBlowUp { .. }
                | Error::Stiffness { .. }
                | Error::SingularGram { .. }
                | Error::NotPositiveDefinite { .. }
                | Error::SigmaDiverged(_)
                | Error::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
