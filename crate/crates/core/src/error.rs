use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A response rule was asked about a transcript it has no entry for.
    #[error("party {party} has no response rule for lambda {lambda}, setting {setting}, transcript {transcript}")]
    Totality {
        party: String,
        lambda: usize,
        setting: u8,
        transcript: String,
    },
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("internal inconsistency: {0}")]
    Inconsistency(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
