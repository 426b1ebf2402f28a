use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter violates an operation precondition.
    Parameter { name: &'static str, reason: String },
    /// An argument lies outside the domain of a function (e.g. `μ(0)` for a
    /// singular kernel, `k(t)` for `t < 0`).
    Domain { what: &'static str, value: f64 },
    /// Inconsistent shapes or mismatched discretizations.
    Structure(String),
    /// A numerical routine failed to reach its tolerance.
    Convergence { what: &'static str, detail: String },
    /// The time integrator produced a non-finite or exploding state.
    Divergence { step: usize, t: f64, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        Error::Structure(msg.into())
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Parameter { name, reason } => write!(f, "invalid parameter `{name}`: {reason}"),
            Error::Domain { what, value } => write!(f, "{what}: argument {value} outside domain"),
            Error::Structure(msg) => write!(f, "structural mismatch: {msg}"),
            Error::Convergence { what, detail } => write!(f, "{what} did not converge: {detail}"),
            Error::Divergence { step, t, reason } => write!(
                f,
                "solution diverged at step {step} (t = {t}): {reason}; try a smaller time step"
            ),
        }
    }
}

impl core::error::Error for Error {}
