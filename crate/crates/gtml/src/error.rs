use thiserror::Error;

/// Errors produced by the gtml crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the space it must belong to.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two objects were built over different spaces.
    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    /// A configuration file or value failed validation.
    #[error("config error: {0}")]
    Config(String),

    /// A bound evaluator was called outside its admissible parameter range.
    #[error("domain error: {0}")]
    Domain(String),

    /// Power iteration did not reach the requested residual.
    #[error("no convergence after {max_iters} iterations (residual {residual:.3e})")]
    NoConvergence { residual: f64, max_iters: usize },

    /// No power of the transition kernel up to `max_n` is entrywise positive.
    #[error("chain is not uniformly ergodic: no all-positive transition power up to {max_n}")]
    NotErgodic { max_n: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A text artifact (trajectory, model file) failed to parse.
    #[error("parse error at line {line}: {detail}")]
    Parse { line: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;
