use thiserror::Error;

/// Errors raised anywhere in the lab.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// Caller supplied arguments violating an operation's preconditions.
    #[error("invalid input: {0}")]
    Input(String),

    /// Shapes of the operands do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A non-finite value reached a routine that requires finite data.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A vector or matrix that must be non-zero was (numerically) zero.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A projector output fell below the normalization floor, i.e. the
    /// representation collapsed.
    #[error("degenerate embedding: pre-normalization norm {norm:e} below {floor:e}")]
    DegenerateEmbedding { norm: f64, floor: f64 },

    /// The InfoNCE negative set is empty.
    #[error("empty negative set: need at least 2 samples, got {0}")]
    EmptyNegatives(usize),

    /// An operation was asked of a projector variant that does not support it.
    #[error("unsupported projector variant: {0}")]
    UnsupportedVariant(&'static str),

    /// An iterative routine hit its iteration cap.
    #[error("{routine} did not converge within {cap} sweeps")]
    NoConvergence { routine: &'static str, cap: usize },

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    /// A training run failed; carries the epoch being trained.
    #[error("training aborted in epoch {epoch}: {source}")]
    Training { epoch: usize, source: Box<LabError> },

    /// Filesystem or serialization failure.
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
