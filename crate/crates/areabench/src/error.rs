//! Crate-wide error type.

/// Errors produced by model construction, sampling, and benchmarking.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid input to a constructor or operation.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// `logit` called outside the open unit interval.
    #[error("logit domain error: {0} is not in (0, 1)")]
    LogitDomain(f64),

    /// The rejection sampler accepted nothing: the benchmark is
    /// inconsistent with the model. Carries the largest per-draw
    /// acceptance probability seen, as a diagnostic of how far off
    /// the draws were.
    #[error("benchmark inconsistent with model: zero acceptances over {considered} draws (max acceptance probability {max_acceptance_prob:.3e})")]
    BenchmarkInconsistent {
        considered: usize,
        max_acceptance_prob: f64,
    },

    /// A Metropolis-Hastings acceptance ratio was non-finite.
    #[error("non-finite MH acceptance ratio at step {step}")]
    NonFiniteAcceptance { step: usize },

    /// Raking pushed one or more draws to 1 or beyond.
    #[error("raking produced draws >= 1 in areas {areas:?} (raking factor {factor})")]
    RakedOutOfRange { areas: Vec<usize>, factor: f64 },

    /// Sampler initialization failed to find a finite log posterior.
    #[error("initialization failed: non-finite log posterior after {retries} retries")]
    Initialization { retries: usize },

    /// File or serialization problem.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed artifact file.
    #[error("parse error in {what}: {detail}")]
    Parse { what: String, detail: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Parse {
            what: what.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
