use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A scalar argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(&'static str),

    /// A parameter block or problem instance violates its invariants.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    /// Matrix or vector sizes do not agree.
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    /// The request exceeds an exact-solver size cap.
    #[error("{what} supports at most {cap} vertices, got {requested}")]
    TooLarge {
        what: &'static str,
        cap: usize,
        requested: usize,
    },
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}
