//! Exact feedback Nash equilibrium of a finite-horizon linear-quadratic game
//! via a coupled backward recursion; reduces to LQR when there is a single
//! player.

use nalgebra::{DMatrix, DVector};

use crate::costs::QuadraticCostTerms;
use crate::dynamics::LinearizedDynamics;
use crate::error::{Error, Result};

/// Condition-number threshold above which the coupled per-timestep system is
/// reported as ill-conditioned instead of solved.
pub const CONDITION_LIMIT: f64 = 1e12;

/// A time-indexed affine feedback law `u_t = ū_t − P_t (x_t − x̄_t) − α_t`
/// for one player.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStrategy {
    /// Gain matrices `P_t`, one `control_dim × state_dim` matrix per timestep.
    pub gains: Vec<DMatrix<f64>>,
    /// Feedforward vectors `α_t`.
    pub feedforwards: Vec<DVector<f64>>,
}

impl AffineStrategy {
    pub fn zeros(horizon: usize, control_dim: usize, state_dim: usize) -> Self {
        Self {
            gains: vec![DMatrix::zeros(control_dim, state_dim); horizon],
            feedforwards: vec![DVector::zeros(control_dim); horizon],
        }
    }

    pub fn horizon(&self) -> usize {
        self.gains.len()
    }

    pub fn gain(&self, t: usize) -> &DMatrix<f64> {
        &self.gains[t]
    }

    pub fn feedforward(&self, t: usize) -> &DVector<f64> {
        &self.feedforwards[t]
    }

    /// Returns a copy with every feedforward scaled by `eta`.
    pub fn scaled_feedforward(&self, eta: f64) -> Self {
        Self {
            gains: self.gains.clone(),
            feedforwards: self.feedforwards.iter().map(|a| a * eta).collect(),
        }
    }

    /// Returns a copy with zeroed feedforwards (gains preserved).
    pub fn without_feedforward(&self) -> Self {
        Self {
            gains: self.gains.clone(),
            feedforwards: self
                .feedforwards
                .iter()
                .map(|a| DVector::zeros(a.len()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.gains.iter().all(|g| g.iter().all(|v| v.is_finite()))
            && self
                .feedforwards
                .iter()
                .all(|a| a.iter().all(|v| v.is_finite()))
    }
}

/// Quadratic value-function expansion for one player:
/// `V_t(δx) = ½ δxᵀ Z_t δx + ζ_tᵀ δx + offset_t`, `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueExpansion {
    pub z: Vec<DMatrix<f64>>,
    pub zeta: Vec<DVector<f64>>,
    pub offsets: Vec<f64>,
}

/// Solves the finite-horizon LQ game: a backward pass over `t = T−1..0`,
/// solving at each timestep the coupled linear system in all players' gains
/// and feedforwards, then propagating each player's quadratic value
/// expansion through the closed loop.
///
/// At the solution each player's strategy is a best response to the others'
/// fixed strategies. Requires `R_t^{ii} ≻ 0`, which the caller guarantees by
/// quadraticizing with a positive relaxation level.
pub fn solve_lq_game(
    lin: &LinearizedDynamics,
    quad: &[QuadraticCostTerms],
) -> Result<(Vec<AffineStrategy>, Vec<ValueExpansion>)> {
    let horizon = lin.horizon();
    let n = lin.state_dim();
    let num_players = lin.num_players();
    if quad.len() != num_players {
        return Err(Error::DimensionMismatch {
            what: "player cost count".into(),
            expected: num_players,
            actual: quad.len(),
        });
    }
    for (i, q) in quad.iter().enumerate() {
        if q.horizon() != horizon {
            return Err(Error::DimensionMismatch {
                what: format!("cost horizon for player {i}"),
                expected: horizon,
                actual: q.horizon(),
            });
        }
    }
    let control_dims: Vec<usize> = (0..num_players).map(|i| lin.b[0][i].ncols()).collect();
    let total_controls: usize = control_dims.iter().sum();
    let block_offsets: Vec<usize> = control_dims
        .iter()
        .scan(0, |acc, &m| {
            let off = *acc;
            *acc += m;
            Some(off)
        })
        .collect();

    let mut strategies: Vec<AffineStrategy> = (0..num_players)
        .map(|i| AffineStrategy::zeros(horizon, control_dims[i], n))
        .collect();
    let mut values: Vec<ValueExpansion> = (0..num_players)
        .map(|_| ValueExpansion {
            z: vec![DMatrix::zeros(n, n); horizon + 1],
            zeta: vec![DVector::zeros(n); horizon + 1],
            offsets: vec![0.0; horizon + 1],
        })
        .collect();
    for (i, q) in quad.iter().enumerate() {
        values[i].z[horizon] = symmetrize(&q.state_hessians[horizon]);
        values[i].zeta[horizon] = q.state_gradients[horizon].clone();
        values[i].offsets[horizon] = q.offsets[horizon];
    }

    for t in (0..horizon).rev() {
        let a = &lin.a[t];
        let b = &lin.b[t];

        // Coupled system in all players' stacked gains and feedforwards.
        // Block row i:  (R^{ii} + B^iᵀ Z^i B^i) P^i + B^iᵀ Z^i Σ_{j≠i} B^j P^j
        //             = B^iᵀ Z^i A, and analogously for α with ζ and r^{ii}.
        let mut coupled = DMatrix::zeros(total_controls, total_controls);
        let mut rhs = DMatrix::zeros(total_controls, n + 1);
        for i in 0..num_players {
            let zi = &values[i].z[t + 1];
            let bt_zi = b[i].transpose() * zi;
            for j in 0..num_players {
                let mut block = &bt_zi * &b[j];
                if i == j {
                    block += &quad[i].control_hessians[t][i];
                }
                coupled
                    .view_mut(
                        (block_offsets[i], block_offsets[j]),
                        (control_dims[i], control_dims[j]),
                    )
                    .copy_from(&block);
            }
            let rhs_gain = &bt_zi * a;
            let rhs_ff = b[i].transpose() * &values[i].zeta[t + 1]
                + &quad[i].control_gradients[t][i];
            rhs.view_mut((block_offsets[i], 0), (control_dims[i], n))
                .copy_from(&rhs_gain);
            rhs.view_mut((block_offsets[i], n), (control_dims[i], 1))
                .copy_from(&rhs_ff);
        }

        let condition = condition_estimate(&coupled);
        if !condition.is_finite() || condition > CONDITION_LIMIT {
            return Err(Error::IllConditioned {
                timestep: t,
                condition,
            });
        }
        let solution = coupled
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or(Error::IllConditioned {
                timestep: t,
                condition,
            })?;

        for i in 0..num_players {
            let gain = solution
                .view((block_offsets[i], 0), (control_dims[i], n))
                .into_owned();
            let ff = solution
                .view((block_offsets[i], n), (control_dims[i], 1))
                .column(0)
                .into_owned();
            strategies[i].gains[t] = gain;
            strategies[i].feedforwards[t] = ff;
        }

        // Closed-loop transition x_{t+1} = F δx + β under the new strategies.
        let mut closed_loop = a.clone();
        let mut beta = DVector::zeros(n);
        for j in 0..num_players {
            closed_loop -= &b[j] * &strategies[j].gains[t];
            beta -= &b[j] * &strategies[j].feedforwards[t];
        }

        for i in 0..num_players {
            let z_next = values[i].z[t + 1].clone();
            let zeta_next = values[i].zeta[t + 1].clone();
            let offset_next = values[i].offsets[t + 1];

            let mut z = quad[i].state_hessians[t].clone()
                + closed_loop.transpose() * &z_next * &closed_loop;
            let mut zeta = quad[i].state_gradients[t].clone()
                + closed_loop.transpose() * (&zeta_next + &z_next * &beta);
            let mut offset = quad[i].offsets[t]
                + offset_next
                + 0.5 * (&z_next * &beta).dot(&beta)
                + zeta_next.dot(&beta);
            for j in 0..num_players {
                let r = &quad[i].control_hessians[t][j];
                let rl = &quad[i].control_gradients[t][j];
                let pj = &strategies[j].gains[t];
                let aj = &strategies[j].feedforwards[t];
                z += pj.transpose() * r * pj;
                zeta += pj.transpose() * (r * aj - rl);
                offset += 0.5 * (r * aj).dot(aj) - rl.dot(aj);
            }
            values[i].z[t] = symmetrize(&z);
            values[i].zeta[t] = zeta;
            values[i].offsets[t] = offset;
        }
    }

    for (i, s) in strategies.iter().enumerate() {
        if !s.is_finite() {
            return Err(Error::ContractViolation(format!(
                "non-finite strategy for player {i}"
            )));
        }
    }
    Ok((strategies, values))
}

/// Single-player reduction: identical to [`solve_lq_game`] with one player,
/// matching the discrete-time Riccati recursion.
pub fn solve_lqr(
    lin: &LinearizedDynamics,
    quad: &QuadraticCostTerms,
) -> Result<(AffineStrategy, ValueExpansion)> {
    if lin.num_players() != 1 {
        return Err(Error::ContractViolation(format!(
            "solve_lqr requires a single-player problem, got {} players",
            lin.num_players()
        )));
    }
    let (mut strategies, mut values) = solve_lq_game(lin, std::slice::from_ref(quad))?;
    Ok((strategies.remove(0), values.remove(0)))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}
