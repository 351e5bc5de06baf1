use thiserror::Error;

/// Crate-wide error type.
///
/// Variants are grouped by how a caller should react: `Domain`, `Geometry`,
/// `Schema`, `Config` and `Pairing` indicate bad input, `Optimization`
/// indicates a numerical failure, `Io` an environment failure.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unmatched indentation ids: {0}")]
    Pairing(String),

    #[error("optimization failed: {0}")]
    Optimization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub fn schema(msg: impl Into<String>) -> Self {
        Error::Schema(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        // CSV problems are schema problems from the caller's perspective; the
        // csv crate already embeds line/field positions in its message.
        match e.kind() {
            csv::ErrorKind::Io(_) => {
                let msg = e.to_string();
                match e.into_kind() {
                    csv::ErrorKind::Io(io) => Error::Io(io),
                    _ => Error::Schema(msg),
                }
            }
            _ => Error::Schema(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
