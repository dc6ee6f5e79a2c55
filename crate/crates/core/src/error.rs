use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("failed to parse {what}: {message}")]
    Parse { what: &'static str, message: String },

    #[error("unknown builtin problem `{0}` (expected state_constraint, push_push or pull_pull)")]
    UnknownProblem(String),

    #[error("no closed form catalogued for {0}")]
    Uncatalogued(String),

    #[error("A\u{2080} empty at x = {x:?}")]
    EmptyInterfaceSet { x: Vec<f64> },

    #[error("no admissible control at constrained node x = {x}")]
    NoAdmissibleControl { x: f64 },

    #[error("fixed-point iteration diverged after {iterations} iterations (residual trace tail: {trace:?})")]
    Divergence { iterations: usize, trace: Vec<f64> },

    #[error("no convergence within {iterations} iterations (residual trace tail: {trace:?})")]
    NotConverged { iterations: usize, trace: Vec<f64> },

    #[error("pseudo time step {dt:e} violates the CFL bound {bound:e}")]
    Cfl { dt: f64, bound: f64 },
}

impl Error {
    /// True for failures of a numerical kernel, as opposed to bad configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EmptyInterfaceSet { .. }
                | Error::NoAdmissibleControl { .. }
                | Error::Divergence { .. }
                | Error::NotConverged { .. }
        )
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}

pub(crate) fn ensure_finite(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{name} must be finite, got {values:?}"))
    }
}
