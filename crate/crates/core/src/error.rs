use std::path::PathBuf;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("CFL violation: dt = {dt:e} exceeds limit {limit:e} (max |u| = {umax:e})")]
    CflViolation { dt: f64, limit: f64, umax: f64 },

    #[error("non-finite coefficient after step {step}")]
    NonFinite { step: u64 },

    #[error("history does not cover window [{t0}, {t1}]")]
    WindowUnavailable { t0: f64, t1: f64 },

    #[error("no shell q <= {q_max} satisfies the determining-wavenumber conditions")]
    Unresolved { q_max: i32 },

    #[error("every Bernstein sample is identically zero")]
    AllZero,

    #[error("kappa_d = 0 while <Lambda> = {avg_lambda} exceeds lambda_0")]
    DivisionByZeroKappa { avg_lambda: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("bad snapshot {path:?}: {reason}")]
    Snapshot { path: PathBuf, reason: String },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::CflViolation { .. } => "CflViolation",
            Error::NonFinite { .. } => "NonFinite",
            Error::WindowUnavailable { .. } => "WindowUnavailable",
            Error::Unresolved { .. } => "Unresolved",
            Error::AllZero => "AllZero",
            Error::DivisionByZeroKappa { .. } => "DivisionByZeroKappa",
            Error::GridMismatch(_) => "GridMismatch",
            Error::InsufficientData(_) => "InsufficientData",
            Error::Parse { .. } => "ParseError",
            Error::Validation(_) => "ValidationError",
            Error::Snapshot { .. } => "SnapshotError",
            Error::Io { .. } => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
