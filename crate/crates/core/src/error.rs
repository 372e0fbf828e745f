use thiserror::Error;

/// Errors raised anywhere in the observer pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("transformation singular at t = {t}: |mu(t)| = {mu:e} is below the floor {floor:e}")]
    Singular { t: f64, mu: f64, floor: f64 },

    #[error("unstable error dynamics: A - KC has eigenvalue with real part {max_real}")]
    Unstable { max_real: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("convergence certificate unavailable: varpi = {varpi} is not positive")]
    CertificateUnavailable { varpi: f64 },

    #[error("{path}:{line}: {message}")]
    Config {
        path: String,
        line: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
