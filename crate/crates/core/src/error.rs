use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate kernel: computed radius {radius} is not positive")]
    DegenerateKernel { radius: f64 },

    #[error("inconsistent trace: diameter decreases at step {step} ({from} -> {to})")]
    InconsistentTrace { step: usize, from: f64, to: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("covariance is not positive semidefinite: {0}")]
    Covariance(String),

    #[error("vanishing sequence stalled at level {level}: tail never drops below {bound} for a = {a}")]
    ConstructionStalled { level: usize, a: f64, bound: f64 },

    #[error("no feasible safety area: threshold {threshold} <= 0 (need n >= {min_n})")]
    NoFeasibleDelta { threshold: f64, min_n: u64 },

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
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Whether the error stems from bad input rather than a failed computation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_) | Error::Config(_) | Error::Unsupported(_)
        )
    }
}
