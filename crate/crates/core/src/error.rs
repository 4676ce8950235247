use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// Malformed or inconsistent schema (missing columns, duplicate names).
    Schema(String),
    /// Unreadable or unparseable input data.
    Ingest(String),
    /// A value cannot be encoded under a previously fitted schema.
    Encoding(String),
    /// A retain/forget split request cannot be satisfied.
    Split(String),
    /// An invalid configuration or poison specification.
    Spec(String),
    /// Model training failed.
    Train(String),
    /// Model file is malformed or has an unsupported version.
    Model(String),
    /// A metric is undefined for the given inputs.
    Metric(String),
    /// API contract violation (shape mismatch, malformed distribution).
    Contract(String),
    /// The unlearning loss became non-finite.
    Diverged {
        epoch: usize,
        step: usize,
        detail: String,
    },
    Io(std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Schema(m) => write!(f, "schema error: {m}"),
            Error::Ingest(m) => write!(f, "ingest error: {m}"),
            Error::Encoding(m) => write!(f, "encoding error: {m}"),
            Error::Split(m) => write!(f, "split error: {m}"),
            Error::Spec(m) => write!(f, "spec error: {m}"),
            Error::Train(m) => write!(f, "train error: {m}"),
            Error::Model(m) => write!(f, "model error: {m}"),
            Error::Metric(m) => write!(f, "metric error: {m}"),
            Error::Contract(m) => write!(f, "contract error: {m}"),
            Error::Diverged {
                epoch,
                step,
                detail,
            } => write!(
                f,
                "unlearning diverged at epoch {epoch}, step {step}: {detail}"
            ),
            Error::Io(e) => write!(f, "io error: {e}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e)
    }
}

impl Error {
    /// True for errors caused by invalid user-supplied configuration rather
    /// than a runtime failure. The CLI maps these to exit code 2.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Schema(_) | Error::Spec(_) | Error::Contract(_))
    }
}
