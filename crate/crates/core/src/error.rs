//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied parameter is outside its valid range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The constrained stiffness matrix could not be assembled or factorized
    /// (typically insufficient supports leaving rigid-body modes).
    #[error("assembly failed: {0}")]
    Assembly(String),

    /// A linear solve did not reach the requested residual.
    #[error("linear solver failed: {detail}")]
    Solver { detail: String },

    /// A root find or other numerical routine broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// The feasible set of the prox subproblem is empty or unrepresentable.
    #[error("constraint infeasible: {0}")]
    Constraint(String),

    /// Step-size calibration could not produce usable bounds.
    #[error("calibration failed: {0}")]
    Calibration(String),

    /// Bad run configuration (unknown problem, malformed config file, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A design file does not match the problem discretization.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An optimization run aborted; carries the 1-based step index.
    #[error("run aborted at step {step}: {source}")]
    AtStep {
        step: u32,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Wraps an error with the optimization step it occurred at.
    pub fn at_step(self, step: u32) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
