use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside [{lo}, {hi}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    /// The rule base or intent configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// No rule fired, so there is no area to take the centroid of.
    #[error("degenerate fuzzy set: output `{0}` has zero area")]
    DegenerateSet(String),

    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("bus error: {0}")]
    Bus(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
