use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke a documented precondition (dimensions, bounds, empty input).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("singular system: {0}")]
    Singular(String),

    /// A non-finite number appeared; `label` names the offending quantity.
    #[error("non-finite value in {label}")]
    NonFinite {
        label: String,
        detail: Option<String>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("protocol error: {reason} (line: {line:?})")]
    Protocol { reason: String, line: String },

    #[error("protocol desync: expected episode {expected_episode} step {expected_step}, got episode {episode} step {step}")]
    Desync {
        expected_episode: u64,
        expected_step: u64,
        episode: u64,
        step: u64,
    },

    #[error("timed out waiting for remote policy")]
    Timeout,

    #[error("remote policy disconnected")]
    Disconnected,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in episode records.
    pub fn tag(&self) -> &'static str {
        match self {
            Error::Contract(_) => "contract",
            Error::Singular(_) => "singular",
            Error::NonFinite { .. } => "non_finite",
            Error::Config(_) => "config",
            Error::Protocol { .. } => "protocol",
            Error::Desync { .. } => "desync",
            Error::Timeout => "timeout",
            Error::Disconnected => "disconnected",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn non_finite(label: impl Into<String>) -> Self {
        Error::NonFinite {
            label: label.into(),
            detail: None,
        }
    }
}
