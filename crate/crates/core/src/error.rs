use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("cutoff {cutoff_hz} Hz must lie strictly below the Nyquist frequency {nyquist_hz} Hz")]
    AboveNyquist { cutoff_hz: f64, nyquist_hz: f64 },

    #[error("signal too short: need at least {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("window [{start_s}, {end_s}] does not overlap the signal")]
    EmptyWindow { start_s: f64, end_s: f64 },

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no dominant plane: acceleration cloud has rank < 2")]
    NoDominantPlane,

    #[error("found {found} signal periods, need at least {needed}")]
    TooFewPeriods { found: usize, needed: usize },

    #[error("found {found} peaks, need at least 2")]
    TooFewPeaks { found: usize },

    #[error("slice {slice}: {layer} symbol {value} outside alphabet of size {size}")]
    SymbolOutOfRange {
        slice: usize,
        layer: &'static str,
        value: usize,
        size: usize,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("{path}:{line}: [{code}] {message}")]
    Validation {
        path: String,
        line: usize,
        code: &'static str,
        message: String,
    },

    #[error("stage `{stage}` failed for participant {participant}: {cause}")]
    Stage {
        stage: String,
        participant: String,
        cause: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
