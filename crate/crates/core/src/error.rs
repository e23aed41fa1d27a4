//! Error types shared across the solver.

use thiserror::Error;

/// Errors raised by dynamics evaluation, LQ solves, and the outer solver.
#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An input had the wrong dimension. `what` names the offending
    /// quantity (player index, axis, or field).
    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        actual: usize,
    },

    /// A rollout produced a non-finite state. Carries the first bad timestep.
    #[error("trajectory diverged: non-finite state at timestep {timestep}")]
    Divergence { timestep: usize },

    /// The coupled per-timestep linear system of the LQ game was singular or
    /// nearly so (condition number above 1e12).
    #[error(
        "ill-conditioned LQ system at timestep {timestep} (condition estimate {condition:.3e})"
    )]
    IllConditioned { timestep: usize, condition: f64 },

    /// A documented precondition was violated by the caller.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// An error raised inside an iterative solve, tagged with the iteration.
    #[error("{source} (at solver iteration {iteration})")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
