use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// Each variant maps onto one of two broad classes (see [`Error::kind`]):
/// problems with the supplied data/configuration, and numerical failures
/// (non-convergence, non-finite densities, indefinite matrices).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("reconstruction failed in interval {interval} starting at t={start}: {reason}")]
    Reconstruction {
        interval: usize,
        start: f64,
        reason: String,
    },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("model is not identifiable: {0}")]
    Identifiability(String),

    #[error("contrast labels do not compose: {0}")]
    LabelMismatch(String),

    #[error("network is disconnected: {0}")]
    Disconnected(String),

    #[error("infeasible inputs: {0}")]
    Infeasible(String),

    #[error("{count} PSA draw(s) failed; first failures: {detail}")]
    PsaDraws { count: usize, detail: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("json error in {path}: {message}")]
    Json { path: String, message: String },
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Data,
    Numerical,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotPositiveDefinite(_)
            | Error::NonConvergence(_)
            | Error::Initialization(_)
            | Error::Identifiability(_)
            | Error::Degenerate(_) => ErrorKind::Numerical,
            Error::Stage { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }

    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
