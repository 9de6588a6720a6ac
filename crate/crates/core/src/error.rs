use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("point {index} has no neighbors within radius {radius}")]
    IsolatedPoint { index: usize, radius: f64 },

    #[error("index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("degenerate neighborhood at point {index}: {reason}")]
    DegenerateNeighborhood { index: usize, reason: String },

    #[error("pushforward metric at point {index} is rank deficient: eigenvalue {eigenvalue:e} <= {threshold:e}")]
    RankDeficientMetric { index: usize, eigenvalue: f64, threshold: f64 },

    #[error("eigensolver did not converge: residual {residual:e} after {iterations} iterations")]
    EigenNonConvergence { residual: f64, iterations: usize },

    #[error("solver did not converge: duality gap {gap:e} after {sweeps} sweeps")]
    SolverNonConvergence { gap: f64, sweeps: usize },

    #[error("non-finite gradient of dictionary entry {function} at point {point}")]
    NonFiniteGradient { point: usize, function: usize },

    #[error("dictionary entry {index} ({name}) has zero normalizer on the data")]
    ZeroNormalizer { index: usize, name: String },

    #[error("no penalty on the path selects at least {target} groups; path summary: {summary}")]
    InconclusiveSelection { target: usize, summary: String },

    #[error("Gram block of the support is singular at point {index}")]
    SingularGram { index: usize },

    #[error("row count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("parse error in {path} at line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("missing upstream artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Broad failure class, used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_)
            | Error::IndexOutOfRange { .. }
            | Error::RowCountMismatch { .. }
            | Error::NonFinite { .. }
            | Error::Parse { .. }
            | Error::Json(_) => ErrorKind::Validation,
            Error::IsolatedPoint { .. }
            | Error::DegenerateNeighborhood { .. }
            | Error::RankDeficientMetric { .. }
            | Error::EigenNonConvergence { .. }
            | Error::SolverNonConvergence { .. }
            | Error::NonFiniteGradient { .. }
            | Error::ZeroNormalizer { .. }
            | Error::InconclusiveSelection { .. }
            | Error::SingularGram { .. } => ErrorKind::Numerical,
            Error::MissingArtifact(_) | Error::Io { .. } => ErrorKind::Io,
            Error::Stage { source, .. } => source.kind(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Error {
        if source.kind() == std::io::ErrorKind::NotFound {
            return Error::MissingArtifact(path.into());
        }
        Error::Io { path: path.into(), source }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
