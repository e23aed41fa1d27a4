//! Solver library for N-player general-sum dynamic games with
//! extremum-over-time (reachability) objectives.
//!
//! The solver finds approximate local feedback Nash equilibria by iterating
//! a linear-quadratic approximation: dynamics are linearized and each
//! player's cost quadraticized about the current operating point, the
//! resulting LQ game is solved exactly by a coupled backward recursion, and
//! a backtracked step is accepted. Extremum-over-time objectives are
//! quadraticized only at the time attaining the extremum, with a small
//! control penalty (the ε-relaxation) keeping each LQ subproblem well posed;
//! the relaxation vanishes as ε → 0.
//!
//! With a single player the same machinery reduces to iterative LQR, which
//! makes it a local method for discrete-time reachability optimal control.
//! The [`safety`] module runs the solver in a receding horizon with
//! minimally-invasive switching between a nominal game and a safety game.

pub mod costs;
pub mod dynamics;
mod error;
pub mod ilq;
pub mod lqgame;
pub mod safety;

pub use costs::{Aggregation, InstantaneousCost, PlayerCost, QuadraticCostTerms, TrackingTerm};
pub use dynamics::{
    linearize_finite_difference, rollout, simulate, BicycleParams, LinearModel,
    LinearizedDynamics, Model, OperatingPoint, QuadrotorParams, SystemSpec,
};
pub use error::{Error, Result};
pub use ilq::{
    epsilon_sweep, solve, verify_local_nash, IterationStats, NashProbeReport, SolveResult,
    SolveStatus, SolverConfig, WarmStart, TRUST_REGION_SCALE,
};
pub use lqgame::{solve_lq_game, solve_lqr, AffineStrategy, ValueExpansion};
pub use safety::{
    min_separation, min_separation_to_others, run_receding_horizon, shift_warm_start,
    ExecutionMode, ExecutionTrace, InvocationRecord, RecedingHorizonConfig,
};
