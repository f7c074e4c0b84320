use thiserror::Error;

/// Errors raised by the estimators in this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(
        "matrix not positive definite after jitter {jitter:e} \
         (diagonal condition estimate {condition:e}); add jitter or remove duplicate nodes"
    )]
    Singular { jitter: f64, condition: f64 },

    #[error("negative posterior variance {0:e}")]
    NegativeVariance(f64),

    #[error("unsupported kernel/measure pair: {0}")]
    UnsupportedPair(String),

    #[error("degenerate projection direction after {0} redraws")]
    DegenerateDirection(usize),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps the error with a short description of where it happened.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, with all context layers removed.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
