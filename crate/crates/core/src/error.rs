use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its admissible range.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("graph generation failed: {0}")]
    Generation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("index error: {0}")]
    Index(String),

    #[error("not strongly convex: {0}")]
    NotStronglyConvex(String),

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// An algorithm precondition (an inequality) does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("codec error: {0}")]
    Codec(String),

    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("rate fit refused: {0}")]
    FitRefused(String),

    #[error("missing quantization log entry: {0}")]
    MissingLog(String),

    #[error("envelope inapplicable: alpha = {alpha} is not below kappa = {kappa}")]
    EnvelopeInapplicable { alpha: f64, kappa: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
