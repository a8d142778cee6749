use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A precondition on an argument was violated (shape mismatch,
    /// out-of-range parameter, wrong sample count, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A truncated summation was requested with a truncation point whose
    /// Poisson tail mass is not negligible.
    #[error("truncation {truncation} too small: tail mass {tail:.3e} exceeds {limit:.3e}")]
    TruncationTooSmall {
        truncation: usize,
        tail: f64,
        limit: f64,
    },

    /// A retrying driver exhausted its abort budget.
    #[error("retry budget exhausted after {attempts} consecutive aborts")]
    RetryExhausted { attempts: u32 },

    /// A generator kept producing out-of-range measures.
    #[error("generator failed to produce a valid pseudo-distribution after {attempts} attempts")]
    GeneratorExhausted { attempts: u32 },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
