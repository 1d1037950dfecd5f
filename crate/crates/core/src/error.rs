use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside an operation's domain (unknown item, off-grid bid, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Work that would exceed a configured size limit.
    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("parse error: {0}")]
    Parse(String),

    /// A JSON document that parses but does not match the schema.
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("no pure stage equilibrium survives at state {state}")]
    NoPureStageEquilibrium { state: String },

    #[error("strategy profile has no prescribed bid for player {player} at {state}")]
    ProfileIncomplete { player: String, state: String },

    #[error("state abstraction is not closed: {state} escapes the declared domain")]
    DomainClosure { state: String },

    /// A structure that should be well formed by construction is not.
    #[error("internal consistency: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    pub(crate) fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema { path: path.into(), message: message.into() }
    }

    pub(crate) fn parameter(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
