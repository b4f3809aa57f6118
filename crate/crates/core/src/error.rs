use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("not enough stored interactions to form a consecutive pair")]
    EmptyBuffer,
    #[error("environment protocol violation: {0}")]
    Protocol(String),
    #[error("poisoned update: {0}")]
    PoisonedUpdate(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
