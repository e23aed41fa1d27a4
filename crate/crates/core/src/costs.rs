//! Per-player instantaneous costs, time aggregation (sum/max/min over the
//! trajectory), control relaxation, and quadratic approximation including
//! the argmax-time rule for extremum-over-time objectives.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::OperatingPoint;
use crate::error::{Error, Result};

/// How per-time values combine into one objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    Sum,
    Max,
    Min,
}

/// One diagonal tracking penalty `½·weight·(x[index] − target)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingTerm {
    pub index: usize,
    pub weight: f64,
    pub target: f64,
}

/// An instantaneous state cost `g_t(x_t)`.
///
/// All kinds are control-independent; control dependence enters only through
/// the relaxation level of the owning [`PlayerCost`].
#[derive(Debug, Clone, PartialEq)]
pub enum InstantaneousCost {
    /// `d̄ − min_j ‖p_own − p_j‖`: penalizes the smallest separation from any
    /// listed opponent. Positions are pairs of global state indices.
    ProximityAvoid {
        desired_separation: f64,
        own_position: [usize; 2],
        opponent_positions: Vec<[usize; 2]>,
    },
    /// `‖(p_x, p_y, p_z)‖_∞ − B`: signed distance from the boundary of a cube
    /// of half-width `B` centered at the origin.
    CubeSignedDistance {
        half_width: f64,
        position: [usize; 3],
    },
    /// Sum of diagonal quadratic tracking penalties.
    QuadraticTracking { terms: Vec<TrackingTerm> },
    /// Weighted sum of component costs.
    CompositeSum {
        components: Vec<(f64, InstantaneousCost)>,
    },
}

impl InstantaneousCost {
    /// Checks structural invariants and that every state index is in bounds.
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let check_index = |idx: usize, what: &str| {
            if idx >= state_dim {
                Err(Error::DimensionMismatch {
                    what: what.to_string(),
                    expected: state_dim,
                    actual: idx,
                })
            } else {
                Ok(())
            }
        };
        match self {
            InstantaneousCost::ProximityAvoid {
                own_position,
                opponent_positions,
                ..
            } => {
                if opponent_positions.is_empty() {
                    return Err(Error::ContractViolation(
                        "proximity cost needs at least one opposing position pair".into(),
                    ));
                }
                for &idx in own_position {
                    check_index(idx, "proximity own position index")?;
                }
                for pair in opponent_positions {
                    for &idx in pair {
                        check_index(idx, "proximity opponent position index")?;
                    }
                }
                Ok(())
            }
            InstantaneousCost::CubeSignedDistance {
                half_width,
                position,
            } => {
                if !(*half_width > 0.0) {
                    return Err(Error::ContractViolation(format!(
                        "cube half-width must be positive, got {half_width}"
                    )));
                }
                for &idx in position {
                    check_index(idx, "cube position index")?;
                }
                Ok(())
            }
            InstantaneousCost::QuadraticTracking { terms } => {
                for term in terms {
                    check_index(term.index, "tracking state index")?;
                }
                Ok(())
            }
            InstantaneousCost::CompositeSum { components } => {
                for (_, c) in components {
                    c.validate(state_dim)?;
                }
                Ok(())
            }
        }
    }

    /// Evaluates `g(x)`.
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            InstantaneousCost::ProximityAvoid {
                desired_separation,
                own_position,
                opponent_positions,
            } => {
                let min_dist = opponent_positions
                    .iter()
                    .map(|opp| distance(x, own_position, opp))
                    .fold(f64::INFINITY, f64::min);
                desired_separation - min_dist
            }
            InstantaneousCost::CubeSignedDistance {
                half_width,
                position,
            } => {
                let inf_norm = position
                    .iter()
                    .map(|&idx| x[idx].abs())
                    .fold(0.0, f64::max);
                inf_norm - half_width
            }
            InstantaneousCost::QuadraticTracking { terms } => terms
                .iter()
                .map(|t| 0.5 * t.weight * (x[t.index] - t.target).powi(2))
                .sum(),
            InstantaneousCost::CompositeSum { components } => components
                .iter()
                .map(|(w, c)| w * c.value(x))
                .sum(),
        }
    }

    /// Gradient `∇_x g`. Non-smooth kinds differentiate the active branch,
    /// breaking exact ties by lowest index.
    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut grad = DVector::zeros(x.len());
        self.add_gradient(x, 1.0, &mut grad);
        grad
    }

    fn add_gradient(&self, x: &DVector<f64>, scale: f64, grad: &mut DVector<f64>) {
        match self {
            InstantaneousCost::ProximityAvoid {
                own_position,
                opponent_positions,
                ..
            } => {
                let opp = &opponent_positions[self.active_opponent(x)];
                let dx = x[own_position[0]] - x[opp[0]];
                let dy = x[own_position[1]] - x[opp[1]];
                let d = (dx * dx + dy * dy).sqrt();
                if d < 1e-12 {
                    return; // coincident positions: any subgradient is valid
                }
                let (nx, ny) = (dx / d, dy / d);
                grad[own_position[0]] -= scale * nx;
                grad[own_position[1]] -= scale * ny;
                grad[opp[0]] += scale * nx;
                grad[opp[1]] += scale * ny;
            }
            InstantaneousCost::CubeSignedDistance { position, .. } => {
                let k = self.active_cube_axis(x);
                let idx = position[k];
                let sign = if x[idx] >= 0.0 { 1.0 } else { -1.0 };
                grad[idx] += scale * sign;
            }
            InstantaneousCost::QuadraticTracking { terms } => {
                for t in terms {
                    grad[t.index] += scale * t.weight * (x[t.index] - t.target);
                }
            }
            InstantaneousCost::CompositeSum { components } => {
                for (w, c) in components {
                    c.add_gradient(x, scale * w, grad);
                }
            }
        }
    }

    /// Hessian `∇²_x g` of the active branch, unprojected.
    pub fn hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut hess = DMatrix::zeros(x.len(), x.len());
        self.add_hessian(x, 1.0, &mut hess);
        hess
    }

    fn add_hessian(&self, x: &DVector<f64>, scale: f64, hess: &mut DMatrix<f64>) {
        match self {
            InstantaneousCost::ProximityAvoid {
                own_position,
                opponent_positions,
                ..
            } => {
                let opp = &opponent_positions[self.active_opponent(x)];
                let dx = x[own_position[0]] - x[opp[0]];
                let dy = x[own_position[1]] - x[opp[1]];
                let d = (dx * dx + dy * dy).sqrt();
                if d < 1e-12 {
                    return;
                }
                let (nx, ny) = (dx / d, dy / d);
                // Hessian of −‖p_own − p_opp‖: blocks of −(I − nnᵀ)/d with
                // sign flips on the cross blocks.
                let m = [
                    [-(1.0 - nx * nx) / d, (nx * ny) / d],
                    [(nx * ny) / d, -(1.0 - ny * ny) / d],
                ];
                let own = own_position;
                for r in 0..2 {
                    for c in 0..2 {
                        let v = scale * m[r][c];
                        hess[(own[r], own[c])] += v;
                        hess[(opp[r], opp[c])] += v;
                        hess[(own[r], opp[c])] -= v;
                        hess[(opp[r], own[c])] -= v;
                    }
                }
            }
            InstantaneousCost::CubeSignedDistance { .. } => {}
            InstantaneousCost::QuadraticTracking { terms } => {
                for t in terms {
                    hess[(t.index, t.index)] += scale * t.weight;
                }
            }
            InstantaneousCost::CompositeSum { components } => {
                for (w, c) in components {
                    c.add_hessian(x, scale * w, hess);
                }
            }
        }
    }

    fn active_opponent(&self, x: &DVector<f64>) -> usize {
        match self {
            InstantaneousCost::ProximityAvoid {
                own_position,
                opponent_positions,
                ..
            } => {
                let mut best = 0;
                let mut best_d = distance(x, own_position, &opponent_positions[0]);
                for (j, opp) in opponent_positions.iter().enumerate().skip(1) {
                    let d = distance(x, own_position, opp);
                    if d < best_d {
                        best = j;
                        best_d = d;
                    }
                }
                best
            }
            _ => unreachable!(),
        }
    }

    fn active_cube_axis(&self, x: &DVector<f64>) -> usize {
        match self {
            InstantaneousCost::CubeSignedDistance { position, .. } => {
                let mut best = 0;
                let mut best_v = x[position[0]].abs();
                for (k, &idx) in position.iter().enumerate().skip(1) {
                    let v = x[idx].abs();
                    if v > best_v {
                        best = k;
                        best_v = v;
                    }
                }
                best
            }
            _ => unreachable!(),
        }
    }
}

fn distance(x: &DVector<f64>, own: &[usize; 2], opp: &[usize; 2]) -> f64 {
    let dx = x[own[0]] - x[opp[0]];
    let dy = x[own[1]] - x[opp[1]];
    (dx * dx + dy * dy).sqrt()
}

/// A player's objective: instantaneous cost, aggregation over time, and the
/// control-relaxation level ε.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerCost {
    pub instantaneous: InstantaneousCost,
    pub aggregation: Aggregation,
    /// Control-relaxation weight; must be positive before any game solve.
    pub epsilon: f64,
}

impl PlayerCost {
    pub fn new(instantaneous: InstantaneousCost, aggregation: Aggregation, epsilon: f64) -> Self {
        Self {
            instantaneous,
            aggregation,
            epsilon,
        }
    }

    pub fn validate(&self, state_dim: usize) -> Result<()> {
        if self.epsilon < 0.0 {
            return Err(Error::ContractViolation(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        self.instantaneous.validate(state_dim)
    }

    /// Returns a copy at a different relaxation level.
    pub fn with_epsilon(&self, epsilon: f64) -> Self {
        Self {
            epsilon,
            ..self.clone()
        }
    }

    /// Relaxed per-time values `g̃_{t,ε} = g(x_t) + ½ε‖u_t‖²` for `player`,
    /// one per state. The terminal state carries no control term.
    pub fn per_time_values(&self, op: &OperatingPoint, player: usize) -> Vec<f64> {
        let horizon = op.horizon();
        (0..=horizon)
            .map(|t| {
                let mut v = self.instantaneous.value(op.state(t));
                if t < horizon && self.epsilon > 0.0 {
                    v += 0.5 * self.epsilon * op.control(t, player).norm_squared();
                }
                v
            })
            .collect()
    }

    /// Aggregated relaxed objective along `op`.
    pub fn evaluate(&self, op: &OperatingPoint, player: usize) -> f64 {
        let values = self.per_time_values(op, player);
        match self.aggregation {
            Aggregation::Sum => values.iter().sum(),
            Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            Aggregation::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    /// Aggregated objective with the relaxation removed (ε = 0 form).
    pub fn evaluate_unrelaxed(&self, op: &OperatingPoint, player: usize) -> f64 {
        self.with_epsilon(0.0).evaluate(op, player)
    }

    /// The smallest time index attaining the extremum of the relaxed
    /// per-time values. Times are 0-based.
    ///
    /// # Panics
    /// If the aggregation is `Sum`, for which no extremal time exists.
    pub fn argextremum_time(&self, op: &OperatingPoint, player: usize) -> usize {
        let values = self.per_time_values(op, player);
        let better: fn(f64, f64) -> bool = match self.aggregation {
            Aggregation::Max => |candidate, best| candidate > best,
            Aggregation::Min => |candidate, best| candidate < best,
            Aggregation::Sum => {
                panic!("argextremum_time requires max or min aggregation")
            }
        };
        let mut arg = 0;
        for (t, &v) in values.iter().enumerate().skip(1) {
            if better(v, values[arg]) {
                arg = t;
            }
        }
        arg
    }

    /// Second-order expansion of the aggregated objective about `op`.
    ///
    /// Sum aggregation expands `g̃` exactly at every timestep. Extremum
    /// aggregation expands the state cost only at the argmax/argmin time
    /// `t'` (it is exactly zero elsewhere) and the control penalty only at
    /// timesteps that influence the state at `t'`; the control Hessian
    /// `R_t^{ii} = ε·I` is kept at every timestep so the LQ subproblem stays
    /// well posed. State Hessians are projected to the PSD cone.
    pub fn quadraticize(&self, op: &OperatingPoint, player: usize) -> QuadraticCostTerms {
        let horizon = op.horizon();
        let players = op.num_players();

        let mut terms = QuadraticCostTerms::zeros_like(op);
        // Timesteps whose control gradient ε·ū_t enters the expansion.
        let control_gradients_below = match self.aggregation {
            Aggregation::Sum => {
                for t in 0..=horizon {
                    let x = op.state(t);
                    terms.state_gradients[t] = self.instantaneous.gradient(x);
                    terms.state_hessians[t] = project_psd(&self.instantaneous.hessian(x));
                    terms.offsets[t] = self.instantaneous.value(x);
                }
                horizon
            }
            Aggregation::Max | Aggregation::Min => {
                let t_star = self.argextremum_time(op, player);
                let x = op.state(t_star);
                terms.state_gradients[t_star] = self.instantaneous.gradient(x);
                terms.state_hessians[t_star] = project_psd(&self.instantaneous.hessian(x));
                terms.offsets[t_star] = self.instantaneous.value(x);
                t_star
            }
        };
        for t in 0..horizon {
            for j in 0..players {
                let mj = op.control(t, j).len();
                if j == player {
                    terms.control_hessians[t][j] =
                        DMatrix::identity(mj, mj) * self.epsilon;
                    if t < control_gradients_below {
                        terms.control_gradients[t][j] = op.control(t, j) * self.epsilon;
                        terms.offsets[t] +=
                            0.5 * self.epsilon * op.control(t, j).norm_squared();
                    } else {
                        terms.control_gradients[t][j] = DVector::zeros(mj);
                    }
                } else {
                    terms.control_hessians[t][j] = DMatrix::zeros(mj, mj);
                    terms.control_gradients[t][j] = DVector::zeros(mj);
                }
            }
        }
        terms
    }
}

/// Per-timestep quadratic cost data for one player: state Hessians `Q_t` and
/// gradients `q_t` for `t = 0..=T`, control Hessians `R_t^{ij}` and gradients
/// `r_t^{ij}` for `t = 0..T`, plus per-time scalar offsets.
///
/// All quantities are expansions in deviations from the operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCostTerms {
    pub state_hessians: Vec<DMatrix<f64>>,
    pub state_gradients: Vec<DVector<f64>>,
    /// `control_hessians[t][j]` is this player's `R_t^{ij}`.
    pub control_hessians: Vec<Vec<DMatrix<f64>>>,
    pub control_gradients: Vec<Vec<DVector<f64>>>,
    pub offsets: Vec<f64>,
}

impl QuadraticCostTerms {
    pub fn zeros_like(op: &OperatingPoint) -> Self {
        let horizon = op.horizon();
        let n = op.state(0).len();
        Self {
            state_hessians: vec![DMatrix::zeros(n, n); horizon + 1],
            state_gradients: vec![DVector::zeros(n); horizon + 1],
            control_hessians: (0..horizon)
                .map(|t| {
                    (0..op.num_players())
                        .map(|j| {
                            let m = op.control(t, j).len();
                            DMatrix::zeros(m, m)
                        })
                        .collect()
                })
                .collect(),
            control_gradients: (0..horizon)
                .map(|t| {
                    (0..op.num_players())
                        .map(|j| DVector::zeros(op.control(t, j).len()))
                        .collect()
                })
                .collect(),
            offsets: vec![0.0; horizon + 1],
        }
    }

    /// Number of timesteps `T` (state arrays have `T+1` entries).
    pub fn horizon(&self) -> usize {
        self.control_hessians.len()
    }
}

/// Projects a (near-)symmetric matrix onto the PSD cone by symmetrizing and
/// clamping negative eigenvalues to zero.
pub fn project_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let mut clamped = eig.eigenvalues.clone();
    let mut any_negative = false;
    for v in clamped.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
            any_negative = true;
        }
    }
    if !any_negative {
        return sym;
    }
    &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose()
}
