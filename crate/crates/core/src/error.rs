//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),
    /// The request is well-formed but has no implementation (e.g. no closed form).
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// Quadrature, ODE refinement or a factorisation failed to converge.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("particle {particle} became non-finite at step {step} (t = {time})")]
    Explosion { particle: usize, step: u64, time: f64 },
    #[error("step-size guard violated at level {level}: h = {h} exceeds {limit}")]
    GuardViolation { level: usize, h: f64, limit: f64 },
    /// A bound that must hold by construction was contradicted by a computed value.
    #[error("invariant violated: {0}")]
    Invariant(String),
    /// A test function with vanishing energy or variance.
    #[error("degenerate test function: {0}")]
    DegenerateTest(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{context}: {source}")]
    Context { context: String, source: Box<Error> },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 config, 4 guard violation, 3 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::GuardViolation { .. } => 4,
            Error::Context { source, .. } => source.exit_code(),
            _ => 3,
        }
    }

    pub fn context(self, context: impl Into<String>) -> Error {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Domain(msg()))
    }
}
