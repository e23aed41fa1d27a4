//! The outer iterative LQ game solver: roll out, linearize, quadraticize,
//! solve the LQ game, control the step, check convergence. Handles games
//! with extremum-over-time objectives through the argmax-time
//! quadraticization and the control relaxation.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::costs::PlayerCost;
use crate::dynamics::{rollout, simulate, OperatingPoint, SystemSpec};
use crate::error::{Error, Result};
use crate::lqgame::{solve_lq_game, AffineStrategy};

/// Fixed multiple of the step scale used by the trust-region acceptance
/// test: a candidate at step scale `η` is accepted when its state-trajectory
/// change from the expansion point is at most `TRUST_REGION_SCALE·η`, or when
/// `η` has already been backtracked to the minimum step and the rollout is
/// finite.
pub const TRUST_REGION_SCALE: f64 = 100.0;

/// Settings for one game solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Convergence tolerance on the ∞-norm state-trajectory change between
    /// accepted iterates.
    pub convergence_tolerance: f64,
    /// First feedforward scale tried each iteration, in (0, 1].
    pub initial_step: f64,
    /// Backtracking shrink factor, in (0, 1).
    pub step_shrink: f64,
    pub min_step: f64,
    /// Control-relaxation level; must be positive for every game solve.
    pub epsilon: f64,
    /// Optional strictly decreasing annealing schedule ending at `epsilon`;
    /// each stage warm-starts the next.
    pub epsilon_schedule: Option<Vec<f64>>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            convergence_tolerance: 1e-3,
            initial_step: 1.0,
            step_shrink: 0.5,
            min_step: 1.0 / 64.0,
            epsilon: 0.1,
            epsilon_schedule: None,
        }
    }
}

impl SolverConfig {
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::ContractViolation("max_iterations must be positive".into()));
        }
        if !(self.convergence_tolerance > 0.0) {
            return Err(Error::ContractViolation(
                "convergence_tolerance must be positive".into(),
            ));
        }
        if !(self.initial_step > 0.0 && self.initial_step <= 1.0) {
            return Err(Error::ContractViolation("initial_step must be in (0, 1]".into()));
        }
        if !(self.step_shrink > 0.0 && self.step_shrink < 1.0) {
            return Err(Error::ContractViolation("step_shrink must be in (0, 1)".into()));
        }
        if !(self.min_step > 0.0) {
            return Err(Error::ContractViolation("min_step must be positive".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::ContractViolation(
                "epsilon must be positive for a game solve".into(),
            ));
        }
        if let Some(schedule) = &self.epsilon_schedule {
            if schedule.is_empty() {
                return Err(Error::ContractViolation("epsilon_schedule is empty".into()));
            }
            if schedule.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::ContractViolation(
                    "epsilon_schedule entries must be positive".into(),
                ));
            }
            if schedule.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::ContractViolation(
                    "epsilon_schedule must be strictly decreasing".into(),
                ));
            }
            if schedule.last() != Some(&self.epsilon) {
                return Err(Error::ContractViolation(
                    "epsilon_schedule must end at the configured epsilon".into(),
                ));
            }
        }
        Ok(())
    }
}

/// How a solve terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Trajectory change between accepted iterates fell below tolerance.
    Converged,
    /// Iteration budget exhausted before convergence.
    MaxIterations,
    /// No finite iterate could be produced at the minimum step; the result
    /// carries the last finite iterate.
    Diverged,
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// Accepted feedforward scale η.
    pub step_scale: f64,
    /// ∞-norm state-trajectory change from the previous accepted iterate.
    pub trajectory_change: f64,
    pub relaxed_costs: Vec<f64>,
}

/// A converged (or best-effort) solution of one game.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Per-player feedback strategies, expressed about `operating_point`
    /// with zero feedforwards: rolling them out reproduces the operating
    /// point exactly.
    pub strategies: Vec<AffineStrategy>,
    pub operating_point: OperatingPoint,
    /// Relaxed objectives (with the ε control term) along `operating_point`.
    pub relaxed_costs: Vec<f64>,
    /// Unrelaxed extremum/sum objectives along `operating_point`.
    pub unrelaxed_costs: Vec<f64>,
    /// Accepted iterations used.
    pub iterations: usize,
    pub status: SolveStatus,
    pub wall_clock_seconds: f64,
    pub warm_started: bool,
    pub iteration_trace: Vec<IterationStats>,
}

impl SolveResult {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }
}

/// Strategies and operating point from a previous solve, used to initialize
/// a new one.
#[derive(Debug, Clone)]
pub struct WarmStart {
    pub strategies: Vec<AffineStrategy>,
    pub operating_point: OperatingPoint,
}

impl From<&SolveResult> for WarmStart {
    fn from(result: &SolveResult) -> Self {
        Self {
            strategies: result.strategies.clone(),
            operating_point: result.operating_point.clone(),
        }
    }
}

/// Solves the dynamic game from `x1` over `horizon` steps.
///
/// Each iteration rolls out the current strategies about the current
/// operating point, linearizes the dynamics and quadraticizes every player's
/// cost there (extremum objectives via the argmax-time rule), solves the LQ
/// game, and accepts a backtracked step. If the config carries an epsilon
/// schedule, the stages run as sequential warm-started solves.
pub fn solve(
    spec: &SystemSpec,
    costs: &[PlayerCost],
    x1: &DVector<f64>,
    horizon: usize,
    config: &SolverConfig,
    warm_start: Option<&WarmStart>,
) -> Result<SolveResult> {
    config.validate()?;
    validate_problem(spec, costs, x1, horizon, config)?;

    let Some(schedule) = config.epsilon_schedule.clone() else {
        return solve_single(spec, costs, x1, horizon, config, warm_start);
    };

    let mut result: Option<SolveResult> = None;
    let mut total_iterations = 0;
    let mut total_seconds = 0.0;
    let mut trace = Vec::new();
    for &eps in &schedule {
        let stage_config = SolverConfig {
            epsilon: eps,
            epsilon_schedule: None,
            ..config.clone()
        };
        let stage_costs: Vec<PlayerCost> = costs.iter().map(|c| c.with_epsilon(eps)).collect();
        let warm_stage = result.as_ref().map(WarmStart::from);
        let stage = solve_single(
            spec,
            &stage_costs,
            x1,
            horizon,
            &stage_config,
            warm_stage.as_ref().or(warm_start),
        )?;
        total_iterations += stage.iterations;
        total_seconds += stage.wall_clock_seconds;
        trace.extend(stage.iteration_trace.iter().cloned());
        result = Some(stage);
    }
    let mut result = result.expect("schedule validated non-empty");
    result.iterations = total_iterations;
    result.wall_clock_seconds = total_seconds;
    result.iteration_trace = trace;
    Ok(result)
}

fn validate_problem(
    spec: &SystemSpec,
    costs: &[PlayerCost],
    x1: &DVector<f64>,
    horizon: usize,
    config: &SolverConfig,
) -> Result<()> {
    if horizon == 0 {
        return Err(Error::ContractViolation("horizon must be positive".into()));
    }
    if x1.len() != spec.state_dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state".into(),
            expected: spec.state_dim(),
            actual: x1.len(),
        });
    }
    if costs.len() != spec.num_players() {
        return Err(Error::DimensionMismatch {
            what: "player cost count".into(),
            expected: spec.num_players(),
            actual: costs.len(),
        });
    }
    for (i, cost) in costs.iter().enumerate() {
        cost.validate(spec.state_dim())?;
        if cost.epsilon != config.epsilon {
            return Err(Error::ContractViolation(format!(
                "cost of player {i} has epsilon {} but the solver is configured with {}",
                cost.epsilon, config.epsilon
            )));
        }
    }
    Ok(())
}

fn solve_single(
    spec: &SystemSpec,
    costs: &[PlayerCost],
    x1: &DVector<f64>,
    horizon: usize,
    config: &SolverConfig,
    warm_start: Option<&WarmStart>,
) -> Result<SolveResult> {
    let clock = Instant::now();

    let mut warm_started = false;
    let (mut current_op, mut current_strategies) = match warm_start {
        Some(ws) => {
            check_warm_start(spec, ws, horizon)?;
            match rollout(spec, x1, &ws.strategies, &ws.operating_point) {
                Ok(op) => {
                    warm_started = true;
                    (op, ws.strategies.clone())
                }
                // A divergent warm rollout falls back to a cold start.
                Err(Error::Divergence { .. }) => cold_start(spec, x1, horizon)?,
                Err(e) => return Err(e),
            }
        }
        None => cold_start(spec, x1, horizon)?,
    };

    let mut trace: Vec<IterationStats> = Vec::new();
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    // Persistent cap on the step scale: when the trajectory change stops
    // contracting between accepted iterates the iteration map is oscillating
    // (argmax times and active cost branches flip between basins), and the
    // cap damps it until the changes contract again.
    let mut step_cap = config.initial_step;
    let mut previous_change = f64::INFINITY;

    for iteration in 0..config.max_iterations {
        let lin = spec.linearize(&current_op)?;
        let quads: Vec<_> = costs
            .iter()
            .enumerate()
            .map(|(i, c)| c.quadraticize(&current_op, i))
            .collect();
        let (lq_strategies, _values) = solve_lq_game(&lin, &quads).map_err(|e| {
            Error::AtIteration {
                iteration,
                source: Box::new(e),
            }
        })?;

        let mut accepted: Option<(OperatingPoint, Vec<AffineStrategy>, f64, f64)> = None;
        for eta in step_scales(step_cap, config) {
            let candidate: Vec<AffineStrategy> = lq_strategies
                .iter()
                .map(|s| s.scaled_feedforward(eta))
                .collect();
            match rollout(spec, x1, &candidate, &current_op) {
                Ok(op) => {
                    let change = op.state_distance(&current_op);
                    let at_min_step = eta <= config.min_step;
                    if change <= TRUST_REGION_SCALE * eta || at_min_step {
                        accepted = Some((op, candidate, change, eta));
                        break;
                    }
                }
                Err(Error::Divergence { .. }) => {}
                Err(e) => return Err(e),
            }
        }

        let Some((new_op, candidate, change, eta)) = accepted else {
            status = SolveStatus::Diverged;
            break;
        };

        current_op = new_op;
        current_strategies = candidate;
        iterations += 1;
        trace.push(IterationStats {
            iteration,
            step_scale: eta,
            trajectory_change: change,
            relaxed_costs: costs
                .iter()
                .enumerate()
                .map(|(i, c)| c.evaluate(&current_op, i))
                .collect(),
        });
        if change < config.convergence_tolerance {
            status = SolveStatus::Converged;
            break;
        }
        if change >= 0.95 * previous_change {
            step_cap = (step_cap * config.step_shrink).max(config.min_step);
        }
        previous_change = change;
    }

    // Re-express strategies about the final operating point: the feedforward
    // is absorbed into the trajectory, so rolling the returned strategies out
    // from the returned operating point reproduces it exactly.
    let strategies: Vec<AffineStrategy> = current_strategies
        .iter()
        .map(AffineStrategy::without_feedforward)
        .collect();

    Ok(SolveResult {
        relaxed_costs: costs
            .iter()
            .enumerate()
            .map(|(i, c)| c.evaluate(&current_op, i))
            .collect(),
        unrelaxed_costs: costs
            .iter()
            .enumerate()
            .map(|(i, c)| c.evaluate_unrelaxed(&current_op, i))
            .collect(),
        strategies,
        operating_point: current_op,
        iterations,
        status,
        wall_clock_seconds: clock.elapsed().as_secs_f64(),
        warm_started,
        iteration_trace: trace,
    })
}

fn check_warm_start(spec: &SystemSpec, ws: &WarmStart, horizon: usize) -> Result<()> {
    if ws.operating_point.horizon() != horizon {
        return Err(Error::DimensionMismatch {
            what: "warm-start horizon".into(),
            expected: horizon,
            actual: ws.operating_point.horizon(),
        });
    }
    if ws.strategies.len() != spec.num_players() {
        return Err(Error::DimensionMismatch {
            what: "warm-start strategy count".into(),
            expected: spec.num_players(),
            actual: ws.strategies.len(),
        });
    }
    Ok(())
}

fn cold_start(
    spec: &SystemSpec,
    x1: &DVector<f64>,
    horizon: usize,
) -> Result<(OperatingPoint, Vec<AffineStrategy>)> {
    let zero_controls: Vec<Vec<DVector<f64>>> = (0..horizon)
        .map(|_| {
            spec.control_dims()
                .iter()
                .map(|&m| DVector::zeros(m))
                .collect()
        })
        .collect();
    let op = simulate(spec, x1, zero_controls)?;
    let strategies = (0..spec.num_players())
        .map(|i| AffineStrategy::zeros(horizon, spec.control_dim(i), spec.state_dim()))
        .collect();
    Ok((op, strategies))
}

fn step_scales(from: f64, config: &SolverConfig) -> Vec<f64> {
    let mut scales = Vec::new();
    let mut eta = from;
    while eta > config.min_step {
        scales.push(eta);
        eta *= config.step_shrink;
    }
    scales.push(config.min_step.min(from));
    scales
}

/// Solves the game at each relaxation level in `epsilons` (strictly
/// decreasing), warm-starting every solve from the previous result; a failed
/// solve is recorded and the sweep continues with a cold start.
pub fn epsilon_sweep(
    spec: &SystemSpec,
    costs: &[PlayerCost],
    x1: &DVector<f64>,
    horizon: usize,
    config: &SolverConfig,
    epsilons: &[f64],
) -> Result<Vec<Result<SolveResult>>> {
    if epsilons.is_empty() {
        return Err(Error::ContractViolation("epsilon sweep list is empty".into()));
    }
    if epsilons.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::ContractViolation(
            "epsilon sweep entries must be positive".into(),
        ));
    }
    if epsilons.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::ContractViolation(
            "epsilon sweep must be strictly decreasing".into(),
        ));
    }

    let mut results: Vec<Result<SolveResult>> = Vec::with_capacity(epsilons.len());
    let mut warm: Option<WarmStart> = None;
    for &eps in epsilons {
        let stage_config = SolverConfig {
            epsilon: eps,
            epsilon_schedule: None,
            ..config.clone()
        };
        let stage_costs: Vec<PlayerCost> = costs.iter().map(|c| c.with_epsilon(eps)).collect();
        let outcome = solve(spec, &stage_costs, x1, horizon, &stage_config, warm.as_ref());
        warm = match &outcome {
            Ok(result) => Some(WarmStart::from(result)),
            Err(_) => None,
        };
        results.push(outcome);
    }
    Ok(results)
}

/// Outcome of the local-Nash perturbation probe: per player, the fraction of
/// random feedforward perturbations that strictly improved that player's
/// relaxed objective (by more than 1e-6) while all other players' strategies
/// stayed fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct NashProbeReport {
    pub improvement_fractions: Vec<f64>,
    pub perturbation_count: usize,
    pub radius: f64,
}

impl NashProbeReport {
    /// True when no player found any strictly improving deviation.
    pub fn is_local_nash_consistent(&self) -> bool {
        self.improvement_fractions.iter().all(|&f| f == 0.0)
    }
}

const IMPROVEMENT_MARGIN: f64 = 1e-6;

/// Probes a solution for unilateral strategy improvements: perturbs each
/// player's feedforward sequence by `perturbation_count` random draws of
/// ∞-norm ≤ `radius`, re-rolls out with all other players fixed, and counts
/// strict improvements of the perturbing player's relaxed objective.
pub fn verify_local_nash(
    result: &SolveResult,
    spec: &SystemSpec,
    costs: &[PlayerCost],
    perturbation_count: usize,
    radius: f64,
    seed: u64,
) -> Result<NashProbeReport> {
    let num_players = spec.num_players();
    if costs.len() != num_players {
        return Err(Error::DimensionMismatch {
            what: "player cost count".into(),
            expected: num_players,
            actual: costs.len(),
        });
    }
    let x1 = result.operating_point.state(0).clone();
    let horizon = result.operating_point.horizon();
    let base: Vec<f64> = costs
        .iter()
        .enumerate()
        .map(|(i, c)| c.evaluate(&result.operating_point, i))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fractions = Vec::with_capacity(num_players);
    for player in 0..num_players {
        let mut improvements = 0usize;
        for _ in 0..perturbation_count {
            let mut perturbed = result.strategies.clone();
            for t in 0..horizon {
                let m = perturbed[player].feedforwards[t].len();
                let delta =
                    DVector::from_fn(m, |_, _| rng.gen_range(-radius..=radius));
                perturbed[player].feedforwards[t] += delta;
            }
            let Ok(op) = rollout(spec, &x1, &perturbed, &result.operating_point) else {
                continue; // divergent deviations cannot improve
            };
            if costs[player].evaluate(&op, player) < base[player] - IMPROVEMENT_MARGIN {
                improvements += 1;
            }
        }
        let denom = perturbation_count.max(1) as f64;
        fractions.push(improvements as f64 / denom);
    }
    Ok(NashProbeReport {
        improvement_fractions: fractions,
        perturbation_count,
        radius,
    })
}
