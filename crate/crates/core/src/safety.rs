//! Receding-horizon execution with minimally-invasive switching between a
//! nominal game strategy and a safety (reachability) game strategy.
//!
//! At every planning invocation the nominal game is solved first; the ego
//! player's unrelaxed safety objective is then evaluated along the nominal
//! plan, and only when it exceeds the threshold is the safety game solved
//! and its ego strategy executed. Non-ego agents always follow the nominal
//! game's strategies.

use std::time::Instant;

use nalgebra::DVector;

use crate::costs::{Aggregation, PlayerCost};
use crate::dynamics::{OperatingPoint, SystemSpec};
use crate::error::{Error, Result};
use crate::ilq::{solve, SolveResult, SolverConfig, WarmStart};
use crate::lqgame::AffineStrategy;

/// Settings for a receding-horizon run. All durations are in seconds and
/// must be (close to) integer multiples of the system's sampling time.
#[derive(Debug, Clone, PartialEq)]
pub struct RecedingHorizonConfig {
    /// Horizon of each planning invocation.
    pub planning_horizon: f64,
    /// Time between invocations; an integer multiple of dt.
    pub replan_interval: f64,
    /// Total executed duration.
    pub total_duration: f64,
    /// The safety game is engaged when the ego's unrelaxed safety objective
    /// along the nominal plan exceeds this value. Zero thresholds at the
    /// desired-separation boundary of the proximity cost.
    pub safety_threshold: f64,
    /// Index of the player whose controller may be overridden.
    pub ego_player: usize,
    /// Warm-start both games from shifted previous solutions.
    pub use_warm_starts: bool,
}

impl RecedingHorizonConfig {
    fn steps(&self, dt: f64, what: &str, seconds: f64) -> Result<usize> {
        let steps = (seconds / dt).round();
        if steps < 1.0 || (seconds - steps * dt).abs() > 1e-9 {
            return Err(Error::ContractViolation(format!(
                "{what} ({seconds} s) must be a positive integer multiple of dt ({dt} s)"
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self, spec: &SystemSpec) -> Result<()> {
        let dt = spec.dt();
        let planning = self.steps(dt, "planning_horizon", self.planning_horizon)?;
        let replan = self.steps(dt, "replan_interval", self.replan_interval)?;
        self.steps(dt, "total_duration", self.total_duration)?;
        if planning < replan {
            return Err(Error::ContractViolation(
                "planning_horizon must be at least replan_interval".into(),
            ));
        }
        if self.ego_player >= spec.num_players() {
            return Err(Error::DimensionMismatch {
                what: "ego player index".into(),
                expected: spec.num_players(),
                actual: self.ego_player,
            });
        }
        Ok(())
    }
}

/// Which controller drove the ego player over an interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecutionMode {
    Nominal,
    Safety,
}

/// Record of one planning invocation.
#[derive(Debug, Clone)]
pub struct InvocationRecord {
    pub invocation: usize,
    /// Global step index at which this invocation's interval starts.
    pub start_step: usize,
    pub mode: ExecutionMode,
    /// Ego's unrelaxed safety objective along the nominal plan; `None` when
    /// the nominal solve failed.
    pub safety_monitor_value: Option<f64>,
    pub nominal_relaxed_costs: Option<Vec<f64>>,
    pub nominal_unrelaxed_costs: Option<Vec<f64>>,
    pub nominal_iterations: Option<usize>,
    pub nominal_converged: Option<bool>,
    pub safety_relaxed_costs: Option<Vec<f64>>,
    pub safety_unrelaxed_costs: Option<Vec<f64>>,
    pub safety_iterations: Option<usize>,
    pub safety_converged: Option<bool>,
    pub warm_started: bool,
    /// Display form of the solver error behind a degraded invocation.
    pub failure: Option<String>,
    /// Set when a solver failure forced the runner to hold the previous
    /// strategy for this interval.
    pub degraded: bool,
    pub wall_clock_seconds: f64,
}

/// Timestamped execution history plus per-invocation records.
#[derive(Debug, Clone)]
pub struct ExecutionTrace {
    pub dt: f64,
    pub safety_threshold: f64,
    /// Executed states, one per step plus the initial state.
    pub states: Vec<DVector<f64>>,
    /// Executed controls per step and player.
    pub controls: Vec<Vec<DVector<f64>>>,
    pub invocations: Vec<InvocationRecord>,
}

impl ExecutionTrace {
    /// The executed trajectory as an operating point (consistency unchecked;
    /// see [`OperatingPoint::with_consistency_checked`]).
    pub fn executed_operating_point(&self) -> Result<OperatingPoint> {
        OperatingPoint::new(self.states.clone(), self.controls.clone())
    }

    /// Number of executed steps.
    pub fn executed_steps(&self) -> usize {
        self.controls.len()
    }

    /// Checks that every non-degraded invocation's mode matches its recorded
    /// monitor value against the threshold.
    pub fn modes_consistent_with_threshold(&self) -> bool {
        self.invocations.iter().all(|inv| {
            match inv.safety_monitor_value {
                Some(v) => (inv.mode == ExecutionMode::Safety) == (v > self.safety_threshold),
                None => inv.degraded,
            }
        })
    }
}

/// Smallest distance between two players' positions over a state sequence.
/// `None` when either player's model carries no position coordinates.
pub fn min_separation(
    spec: &SystemSpec,
    states: &[DVector<f64>],
    player_a: usize,
    player_b: usize,
) -> Option<f64> {
    let ia = spec.position_indices(player_a)?;
    let ib = spec.position_indices(player_b)?;
    let dims = ia.len().min(ib.len());
    let mut best = f64::INFINITY;
    for x in states {
        let d2: f64 = (0..dims)
            .map(|k| (x[ia[k]] - x[ib[k]]).powi(2))
            .sum();
        best = best.min(d2.sqrt());
    }
    Some(best)
}

/// Smallest distance from `player` to any other player over a state sequence.
pub fn min_separation_to_others(
    spec: &SystemSpec,
    states: &[DVector<f64>],
    player: usize,
) -> Option<f64> {
    let mut best = f64::INFINITY;
    let mut found = false;
    for other in 0..spec.num_players() {
        if other == player {
            continue;
        }
        if let Some(d) = min_separation(spec, states, player, other) {
            best = best.min(d);
            found = true;
        }
    }
    found.then_some(best)
}

/// Shifts a previous solution forward by `steps` timesteps for receding-
/// horizon reuse: strategies and operating point advance, and the tail is
/// padded by repeating the final timestep's strategy entries and rolling the
/// dynamics forward under them.
pub fn shift_warm_start(
    previous: &SolveResult,
    spec: &SystemSpec,
    steps: usize,
) -> Result<WarmStart> {
    let horizon = previous.operating_point.horizon();
    if steps >= horizon {
        return Err(Error::ContractViolation(format!(
            "shift of {steps} steps must be smaller than the horizon {horizon}"
        )));
    }
    let num_players = previous.strategies.len();
    let last_t = horizon - 1;

    let strategies: Vec<AffineStrategy> = previous
        .strategies
        .iter()
        .map(|src| AffineStrategy {
            gains: (0..horizon)
                .map(|t| src.gains[(t + steps).min(last_t)].clone())
                .collect(),
            feedforwards: (0..horizon)
                .map(|t| src.feedforwards[(t + steps).min(last_t)].clone())
                .collect(),
        })
        .collect();

    let op = &previous.operating_point;
    let mut states: Vec<DVector<f64>> = op.states()[steps..].to_vec();
    let mut controls: Vec<Vec<DVector<f64>>> = op.controls()[steps..].to_vec();
    while states.len() < horizon + 1 {
        let x = states.last().expect("non-empty states").clone();
        let mut ut = Vec::with_capacity(num_players);
        for (i, strategy) in previous.strategies.iter().enumerate() {
            let dx = &x - op.state(last_t);
            let u = op.control(last_t, i) - strategy.gain(last_t) * dx
                - strategy.feedforward(last_t);
            if !u.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence {
                    timestep: states.len(),
                });
            }
            ut.push(u);
        }
        let next = spec.step(&x, &ut, states.len() - 1)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                timestep: states.len(),
            });
        }
        controls.push(ut);
        states.push(next);
    }
    let operating_point =
        OperatingPoint::new(states, controls)?.with_consistency_checked(spec)?;
    Ok(WarmStart {
        strategies,
        operating_point,
    })
}

/// A plan being executed: per player, the feedback strategy and the
/// operating point it is referenced to. `age` counts steps already executed
/// since the plan was made.
struct Plan {
    entries: Vec<(AffineStrategy, OperatingPoint)>,
    age: usize,
}

impl Plan {
    fn controls(&self, offset: usize, x: &DVector<f64>) -> Vec<DVector<f64>> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, (strategy, reference))| {
                let idx = (self.age + offset).min(strategy.horizon() - 1);
                let dx = x - reference.state(idx);
                reference.control(idx, i) - strategy.gain(idx) * dx - strategy.feedforward(idx)
            })
            .collect()
    }
}

/// Stored previous solution plus its age in executed steps, for warm starts.
struct AgedSolution {
    result: SolveResult,
    age: usize,
}

impl AgedSolution {
    fn warm_start(&self, spec: &SystemSpec) -> Option<WarmStart> {
        let horizon = self.result.operating_point.horizon();
        if self.age == 0 {
            Some(WarmStart::from(&self.result))
        } else if self.age < horizon {
            shift_warm_start(&self.result, spec, self.age).ok()
        } else {
            None
        }
    }
}

/// Runs the minimally-invasive receding-horizon loop.
///
/// Preconditions: every nominal cost uses sum aggregation and the ego's
/// safety cost uses max aggregation; both games share the system and
/// horizon. On a solver failure the runner holds the last strategy for that
/// interval and marks the invocation degraded.
pub fn run_receding_horizon(
    spec: &SystemSpec,
    nominal_costs: &[PlayerCost],
    safety_costs: &[PlayerCost],
    x1: &DVector<f64>,
    rh: &RecedingHorizonConfig,
    solver: &SolverConfig,
) -> Result<ExecutionTrace> {
    rh.validate(spec)?;
    solver.validate()?;
    if nominal_costs.len() != spec.num_players() || safety_costs.len() != spec.num_players() {
        return Err(Error::DimensionMismatch {
            what: "cost set size".into(),
            expected: spec.num_players(),
            actual: nominal_costs.len().min(safety_costs.len()),
        });
    }
    if nominal_costs
        .iter()
        .any(|c| c.aggregation != Aggregation::Sum)
    {
        return Err(Error::ContractViolation(
            "nominal costs must use sum aggregation".into(),
        ));
    }
    if safety_costs[rh.ego_player].aggregation != Aggregation::Max {
        return Err(Error::ContractViolation(
            "the ego's safety cost must use max aggregation".into(),
        ));
    }

    let dt = spec.dt();
    let horizon = (rh.planning_horizon / dt).round() as usize;
    let replan_steps = (rh.replan_interval / dt).round() as usize;
    let exec_steps = (rh.total_duration / dt).round() as usize;

    let mut state = x1.clone();
    let mut states = vec![state.clone()];
    let mut executed_controls: Vec<Vec<DVector<f64>>> = Vec::with_capacity(exec_steps);
    let mut invocations = Vec::new();

    let mut plan: Option<Plan> = None;
    let mut last_nominal: Option<AgedSolution> = None;
    let mut last_safety: Option<AgedSolution> = None;

    let mut step = 0;
    let mut invocation = 0;
    while step < exec_steps {
        let exec_now = replan_steps.min(exec_steps - step);
        let clock = Instant::now();

        let warm_nominal = if rh.use_warm_starts {
            last_nominal.as_ref().and_then(|aged| aged.warm_start(spec))
        } else {
            None
        };
        let nominal_outcome = solve(
            spec,
            nominal_costs,
            &state,
            horizon,
            solver,
            warm_nominal.as_ref(),
        );

        let mut record = InvocationRecord {
            invocation,
            start_step: step,
            mode: ExecutionMode::Nominal,
            safety_monitor_value: None,
            nominal_relaxed_costs: None,
            nominal_unrelaxed_costs: None,
            nominal_iterations: None,
            nominal_converged: None,
            safety_relaxed_costs: None,
            safety_unrelaxed_costs: None,
            safety_iterations: None,
            safety_converged: None,
            warm_started: false,
            degraded: false,
            failure: None,
            wall_clock_seconds: 0.0,
        };

        match nominal_outcome {
            Ok(nominal) => {
                let monitor = safety_costs[rh.ego_player]
                    .evaluate_unrelaxed(&nominal.operating_point, rh.ego_player);
                record.safety_monitor_value = Some(monitor);
                record.nominal_relaxed_costs = Some(nominal.relaxed_costs.clone());
                record.nominal_unrelaxed_costs = Some(nominal.unrelaxed_costs.clone());
                record.nominal_iterations = Some(nominal.iterations);
                record.nominal_converged = Some(nominal.converged());
                record.warm_started = nominal.warm_started;

                let engage_safety = monitor > rh.safety_threshold;
                let mut safety_solution: Option<SolveResult> = None;
                if engage_safety {
                    record.mode = ExecutionMode::Safety;
                    let warm_safety = if rh.use_warm_starts {
                        last_safety.as_ref().and_then(|aged| aged.warm_start(spec))
                    } else {
                        None
                    };
                    match solve(
                        spec,
                        safety_costs,
                        &state,
                        horizon,
                        solver,
                        warm_safety.as_ref(),
                    ) {
                        Ok(safety) => {
                            record.safety_relaxed_costs = Some(safety.relaxed_costs.clone());
                            record.safety_unrelaxed_costs =
                                Some(safety.unrelaxed_costs.clone());
                            record.safety_iterations = Some(safety.iterations);
                            record.safety_converged = Some(safety.converged());
                            safety_solution = Some(safety);
                        }
                        Err(e) => {
                            record.degraded = true;
                            record.failure = Some(e.to_string());
                        }
                    }
                }

                if !(engage_safety && safety_solution.is_none()) {
                    let entries = (0..spec.num_players())
                        .map(|i| {
                            let source = match (&safety_solution, i == rh.ego_player) {
                                (Some(safety), true) => safety,
                                _ => &nominal,
                            };
                            (source.strategies[i].clone(), source.operating_point.clone())
                        })
                        .collect();
                    plan = Some(Plan { entries, age: 0 });
                }

                if let Some(safety) = safety_solution {
                    last_safety = Some(AgedSolution {
                        result: safety,
                        age: 0,
                    });
                }
                last_nominal = Some(AgedSolution {
                    result: nominal,
                    age: 0,
                });
            }
            Err(e) => {
                record.degraded = true;
                record.failure = Some(e.to_string());
            }
        }

        record.wall_clock_seconds = clock.elapsed().as_secs_f64();

        for offset in 0..exec_now {
            let ut = match &plan {
                Some(p) => p.controls(offset, &state),
                None => spec
                    .control_dims()
                    .iter()
                    .map(|&m| DVector::zeros(m))
                    .collect(),
            };
            let next = spec.step(&state, &ut, step + offset)?;
            if !next.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence {
                    timestep: step + offset + 1,
                });
            }
            executed_controls.push(ut);
            states.push(next.clone());
            state = next;
        }

        if let Some(p) = &mut plan {
            p.age += exec_now;
        }
        if let Some(aged) = &mut last_nominal {
            aged.age += exec_now;
        }
        if let Some(aged) = &mut last_safety {
            aged.age += exec_now;
        }
        invocations.push(record);
        step += exec_now;
        invocation += 1;
    }

    Ok(ExecutionTrace {
        dt,
        safety_threshold: rh.safety_threshold,
        states,
        controls: executed_controls,
        invocations,
    })
}
