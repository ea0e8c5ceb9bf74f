use thiserror::Error;

/// Errors raised by the simulators and estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument is outside its domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: &'static str, reason: String },

    /// A configuration is inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// The front came within half of the instantiated window.
    #[error(
        "window exhausted: front reached {front} (window {window}) at t={time}; enlarge the window"
    )]
    WindowExhausted { front: u64, window: u64, time: f64 },

    /// Caricature I ran out of red particles inside the window.
    #[error("red particles exhausted at front {front}, t={time}: needed {needed} more")]
    RedExhausted { front: u64, time: f64, needed: usize },

    /// A model invariant failed; this is a bug or a corrupted state.
    #[error("invariant violation: {0}")]
    Invariant(String),

    /// Fewer regeneration cycles than the estimator needs.
    #[error("insufficient regeneration cycles: found {found}, need {needed}")]
    InsufficientCycles { found: usize, needed: usize },

    /// No events qualified for a conditional average.
    #[error("no qualifying events: {0}")]
    Empty(String),

    /// Log-log fit impossible on the requested window.
    #[error("fit domain error: {0}")]
    FitDomain(String),

    /// Every run of an ensemble aborted.
    #[error("all {} runs aborted; first cause: {}", causes.len(), causes.first().map(|c| c.1.as_str()).unwrap_or("none"))]
    Ensemble { causes: Vec<(u64, String)> },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for window and red-supply exhaustion.
    pub fn is_resource_exhaustion(&self) -> bool {
        matches!(
            self,
            Error::WindowExhausted { .. } | Error::RedExhausted { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
