use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("signal has no samples")]
    EmptySignal,

    #[error("signal lasts {duration_s:.3}s but {required_s:.3}s are required")]
    SignalTooShort { duration_s: f64, required_s: f64 },

    #[error("series has {len} values but at least {required} are required")]
    TooShort { len: usize, required: usize },

    #[error("{len} RR intervals given, at least 2 are required")]
    TooFewIntervals { len: usize },

    #[error("invalid RR interval {value} at index {index}: intervals must be finite and positive")]
    InvalidInterval { index: usize, value: f64 },

    #[error("length mismatch: {estimates} estimates vs {truths} truths")]
    LengthMismatch { estimates: usize, truths: usize },

    #[error("ground truth at index {index} is zero")]
    ZeroTruth { index: usize },

    #[error("RR error target {target_pct}% is not achievable with positive intervals")]
    InvalidTarget { target_pct: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("trace provides {available} values but a window of {required} is required")]
    TraceTooShort { available: usize, required: usize },

    #[error("window ending at {window_end_s:.2}s contains fewer than two true RR intervals")]
    EmptyWindow { window_end_s: f64 },

    #[error("{len} samples cannot be split into non-empty train and test sets")]
    TooFewSamples { len: usize },

    #[error("training set is empty")]
    EmptyDataset,

    #[error("k = {k} exceeds the {available} training samples")]
    KTooLarge { k: usize, available: usize },

    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparams(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    DivergedLoss { epoch: usize },

    #[error("model expects {expected} features, got {actual}")]
    FeatureLengthMismatch { expected: usize, actual: usize },

    #[error("every candidate configuration failed to train")]
    SearchFailed,

    #[error("model decode failed: {0}")]
    Decode(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("timestamps are not strictly increasing at line {line}")]
    NonMonotoneTime { line: u64 },

    #[error("inferred sampling rate {inferred_hz:.3} Hz differs from declared {declared_hz} Hz")]
    RateMismatch { inferred_hz: f64, declared_hz: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Coarse classification used to map failures onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) | Error::InvalidHyperparams(_) | Error::InvalidTarget { .. } => ErrorClass::Config,
            Error::DivergedLoss { .. } | Error::SearchFailed => ErrorClass::Internal,
            _ => ErrorClass::Data,
        }
    }
}
