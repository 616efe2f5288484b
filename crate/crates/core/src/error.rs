use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no improving offspring possible at fitness level {level} (improvement probability {probability:e})")]
    ZeroImprovement { level: usize, probability: f64 },

    #[error("optimizer did not converge (fitness level {level:?}) after {iterations} iterations")]
    NonConvergence { level: Option<usize>, iterations: usize },

    #[error("capacity exceeded: {what} supports n <= {max}, got {n}")]
    Capacity { what: &'static str, max: usize, n: usize },

    #[error("usage: {0}")]
    Usage(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches a fitness level to optimizer failures.
    pub fn at_level(self, level: usize) -> Self {
        match self {
            Error::NonConvergence { iterations, .. } => {
                Error::NonConvergence { level: Some(level), iterations }
            }
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
