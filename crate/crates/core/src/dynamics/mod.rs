//! Discrete-time multi-player dynamical systems: evaluation, Euler
//! discretization of continuous-time models, and linearization.

mod models;

pub use models::{
    BicycleParams, LinearModel, Model, QuadrotorParams, DEFAULT_GRAVITY,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lqgame::AffineStrategy;

/// Per-coordinate residual below which a trajectory counts as dynamically
/// consistent.
pub const CONSISTENCY_TOL: f64 = 1e-12;

/// A multi-player system: a model, its sampling time, and cached dimensions.
///
/// Immutable after construction; all operations are pure functions.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    model: Model,
    dt: f64,
    state_dim: usize,
    control_dims: Vec<usize>,
    state_offsets: Vec<usize>,
}

impl SystemSpec {
    /// Builds a spec, validating the model layout and sampling time.
    pub fn new(model: Model, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::ContractViolation(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if let Model::Product(subs) = &model {
            if subs.is_empty() {
                return Err(Error::ContractViolation(
                    "product model needs at least one subsystem".into(),
                ));
            }
            for (i, sub) in subs.iter().enumerate() {
                if matches!(sub, Model::Product(_)) {
                    return Err(Error::ContractViolation(format!(
                        "subsystem {i}: nested products are not supported"
                    )));
                }
                if sub.control_dims().len() != 1 {
                    return Err(Error::ContractViolation(format!(
                        "subsystem {i}: product subsystems must be single-player"
                    )));
                }
            }
        }
        if let Model::Linear(m) = &model {
            let n = m.a.nrows();
            if m.a.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what: "linear model A".into(),
                    expected: n,
                    actual: m.a.ncols(),
                });
            }
            for (i, b) in m.b.iter().enumerate() {
                if b.nrows() != n {
                    return Err(Error::DimensionMismatch {
                        what: format!("linear model B for player {i}"),
                        expected: n,
                        actual: b.nrows(),
                    });
                }
            }
        }
        let control_dims = model.control_dims();
        if control_dims.iter().any(|&m| m == 0) {
            return Err(Error::ContractViolation(
                "all control dimensions must be at least 1".into(),
            ));
        }
        let state_dim = model.state_dim();
        let state_offsets = match &model {
            Model::Product(subs) => {
                let mut offsets = Vec::with_capacity(subs.len());
                let mut acc = 0;
                for sub in subs {
                    offsets.push(acc);
                    acc += sub.state_dim();
                }
                offsets
            }
            _ => vec![0; control_dims.len()],
        };
        Ok(Self {
            model,
            dt,
            state_dim,
            control_dims,
            state_offsets,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn num_players(&self) -> usize {
        self.control_dims.len()
    }

    pub fn control_dims(&self) -> &[usize] {
        &self.control_dims
    }

    pub fn control_dim(&self, player: usize) -> usize {
        self.control_dims[player]
    }

    /// Offset of player `i`'s subsystem block in the joint state. For
    /// non-product models every player shares offset 0.
    pub fn state_offset(&self, player: usize) -> usize {
        self.state_offsets[player]
    }

    /// Global state indices of player `i`'s position coordinates, when the
    /// player's model carries a position (bicycle and unicycle are planar,
    /// the quadrotor is 3-D). `None` for linear models.
    pub fn position_indices(&self, player: usize) -> Option<Vec<usize>> {
        let sub = match &self.model {
            Model::Product(subs) => &subs[player],
            m => m,
        };
        let off = self.state_offsets[player];
        match sub {
            Model::SingleBicycle(_) | Model::Unicycle => Some(vec![off, off + 1]),
            Model::Quadrotor14(_) => Some(vec![off, off + 1, off + 2]),
            Model::Linear(_) | Model::Product(_) => None,
        }
    }

    fn check_state(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim {
            return Err(Error::DimensionMismatch {
                what: "state vector".into(),
                expected: self.state_dim,
                actual: x.len(),
            });
        }
        Ok(())
    }

    fn check_controls(&self, u: &[DVector<f64>]) -> Result<()> {
        if u.len() != self.num_players() {
            return Err(Error::DimensionMismatch {
                what: "player count".into(),
                expected: self.num_players(),
                actual: u.len(),
            });
        }
        for (i, ui) in u.iter().enumerate() {
            if ui.len() != self.control_dims[i] {
                return Err(Error::DimensionMismatch {
                    what: format!("control of player {i}"),
                    expected: self.control_dims[i],
                    actual: ui.len(),
                });
            }
        }
        Ok(())
    }

    /// Advances the state one timestep: `x + dt·f(x, u)` for Euler-discretized
    /// continuous models, the exact affine update for linear models.
    ///
    /// All built-in models are time-invariant; `_t` is accepted for
    /// time-varying extensions.
    pub fn step(&self, x: &DVector<f64>, u: &[DVector<f64>], _t: usize) -> Result<DVector<f64>> {
        self.check_state(x)?;
        self.check_controls(u)?;
        match &self.model {
            Model::Linear(m) => {
                let mut next = &m.a * x;
                for (b, ui) in m.b.iter().zip(u) {
                    next += b * ui;
                }
                Ok(next)
            }
            Model::Product(subs) => {
                let mut next = DVector::zeros(self.state_dim);
                for (i, sub) in subs.iter().enumerate() {
                    let off = self.state_offsets[i];
                    let n = sub.state_dim();
                    let xi = x.rows(off, n).into_owned();
                    let stepped = sub_step(sub, &xi, &u[i], self.dt);
                    next.rows_mut(off, n).copy_from(&stepped);
                }
                Ok(next)
            }
            single => Ok(sub_step(single, x, &u[0], self.dt)),
        }
    }

    /// Jacobians `A_t = ∂step/∂x`, `B_t^i = ∂step/∂u^i` along an operating
    /// point, computed analytically for every built-in model.
    pub fn linearize(&self, op: &OperatingPoint) -> Result<LinearizedDynamics> {
        self.check_op(op)?;
        let horizon = op.horizon();
        let mut a = Vec::with_capacity(horizon);
        let mut b = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let (at, bt) = self.step_jacobians(op.state(t), &op.controls()[t])?;
            a.push(at);
            b.push(bt);
        }
        Ok(LinearizedDynamics { a, b })
    }

    fn step_jacobians(
        &self,
        x: &DVector<f64>,
        u: &[DVector<f64>],
    ) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        self.check_state(x)?;
        self.check_controls(u)?;
        match &self.model {
            Model::Linear(m) => Ok((m.a.clone(), m.b.clone())),
            Model::Product(subs) => {
                let mut a = DMatrix::zeros(self.state_dim, self.state_dim);
                let mut b = Vec::with_capacity(subs.len());
                for (i, sub) in subs.iter().enumerate() {
                    let off = self.state_offsets[i];
                    let n = sub.state_dim();
                    let xi = x.rows(off, n).into_owned();
                    let (ai, bi) = sub_jacobians(sub, &xi, &u[i], self.dt);
                    a.view_mut((off, off), (n, n)).copy_from(&ai);
                    let mut bfull = DMatrix::zeros(self.state_dim, self.control_dims[i]);
                    bfull.view_mut((off, 0), (n, self.control_dims[i])).copy_from(&bi);
                    b.push(bfull);
                }
                Ok((a, b))
            }
            single => {
                let (a, b) = sub_jacobians(single, x, &u[0], self.dt);
                Ok((a, vec![b]))
            }
        }
    }

    fn check_op(&self, op: &OperatingPoint) -> Result<()> {
        for x in op.states() {
            self.check_state(x)?;
        }
        for u in op.controls() {
            self.check_controls(u)?;
        }
        Ok(())
    }
}

fn sub_step(model: &Model, x: &DVector<f64>, u: &DVector<f64>, dt: f64) -> DVector<f64> {
    match model {
        Model::Linear(m) => &m.a * x + &m.b[0] * u,
        _ => {
            let f = model
                .vector_field(x, u)
                .expect("non-linear models define a vector field");
            x + f * dt
        }
    }
}

fn sub_jacobians(
    model: &Model,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    match model {
        Model::Linear(m) => (m.a.clone(), m.b[0].clone()),
        _ => {
            let (dfdx, dfdu) = model
                .vector_field_jacobians(x, u)
                .expect("non-linear models define analytic jacobians");
            let n = x.len();
            (DMatrix::identity(n, n) + dfdx * dt, dfdu * dt)
        }
    }
}

/// A state trajectory plus all players' control trajectories: the expansion
/// point of every solver iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    states: Vec<DVector<f64>>,
    controls: Vec<Vec<DVector<f64>>>,
    consistent: bool,
}

impl OperatingPoint {
    /// Builds an operating point from `T+1` states and `T` per-player control
    /// sets. The dynamic-consistency flag starts unset; see
    /// [`OperatingPoint::with_consistency_checked`].
    pub fn new(states: Vec<DVector<f64>>, controls: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        if states.len() != controls.len() + 1 {
            return Err(Error::DimensionMismatch {
                what: "states vs controls".into(),
                expected: controls.len() + 1,
                actual: states.len(),
            });
        }
        if states.is_empty() {
            return Err(Error::ContractViolation(
                "operating point needs at least one state".into(),
            ));
        }
        let players = controls.first().map_or(0, Vec::len);
        for (t, ut) in controls.iter().enumerate() {
            if ut.len() != players {
                return Err(Error::DimensionMismatch {
                    what: format!("player controls at timestep {t}"),
                    expected: players,
                    actual: ut.len(),
                });
            }
        }
        Ok(Self {
            states,
            controls,
            consistent: false,
        })
    }

    /// The all-zero operating point for `spec` over `horizon` steps.
    pub fn zeros(spec: &SystemSpec, horizon: usize) -> Self {
        let states = vec![DVector::zeros(spec.state_dim()); horizon + 1];
        let controls = (0..horizon)
            .map(|_| {
                spec.control_dims()
                    .iter()
                    .map(|&m| DVector::zeros(m))
                    .collect()
            })
            .collect();
        Self {
            states,
            controls,
            consistent: false,
        }
    }

    /// Number of timesteps `T` (one less than the number of states).
    pub fn horizon(&self) -> usize {
        self.states.len() - 1
    }

    pub fn num_players(&self) -> usize {
        self.controls.first().map_or(0, Vec::len)
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn state(&self, t: usize) -> &DVector<f64> {
        &self.states[t]
    }

    pub fn controls(&self) -> &[Vec<DVector<f64>>] {
        &self.controls
    }

    pub fn control(&self, t: usize, player: usize) -> &DVector<f64> {
        &self.controls[t][player]
    }

    /// Whether this trajectory has been verified to satisfy the dynamics.
    /// Set by [`rollout`]/[`simulate`] (which construct consistent
    /// trajectories) or by an explicit consistency check.
    pub fn is_dynamically_consistent(&self) -> bool {
        self.consistent
    }

    /// Largest per-coordinate defect `|x_{t+1} − f_t(x_t, u_t)|` along the
    /// trajectory.
    pub fn consistency_residual(&self, spec: &SystemSpec) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for t in 0..self.horizon() {
            let predicted = spec.step(&self.states[t], &self.controls[t], t)?;
            let defect = (&self.states[t + 1] - predicted).abs().max();
            worst = worst.max(defect);
        }
        Ok(worst)
    }

    /// Returns `self` with the consistency flag set iff every per-coordinate
    /// defect is below [`CONSISTENCY_TOL`].
    pub fn with_consistency_checked(mut self, spec: &SystemSpec) -> Result<Self> {
        let residual = self.consistency_residual(spec)?;
        self.consistent = residual < CONSISTENCY_TOL;
        Ok(self)
    }

    pub(crate) fn mark_consistent(&mut self) {
        self.consistent = true;
    }

    /// ∞-norm of the state-trajectory difference to another operating point.
    pub fn state_distance(&self, other: &OperatingPoint) -> f64 {
        self.states
            .iter()
            .zip(other.states.iter())
            .map(|(a, b)| (a - b).abs().max())
            .fold(0.0, f64::max)
    }
}

/// Time-indexed Jacobians of the discrete dynamics about an operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedDynamics {
    /// `A_t`, one `state_dim × state_dim` matrix per timestep.
    pub a: Vec<DMatrix<f64>>,
    /// `B_t^i`, per timestep a list of `state_dim × control_dims[i]` matrices.
    pub b: Vec<Vec<DMatrix<f64>>>,
}

impl LinearizedDynamics {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn num_players(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn state_dim(&self) -> usize {
        self.a.first().map_or(0, |a| a.nrows())
    }
}

/// Simulates open-loop controls forward from `x1`. The result is dynamically
/// consistent by construction.
pub fn simulate(
    spec: &SystemSpec,
    x1: &DVector<f64>,
    controls: Vec<Vec<DVector<f64>>>,
) -> Result<OperatingPoint> {
    let horizon = controls.len();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x1.clone());
    for (t, ut) in controls.iter().enumerate() {
        let next = spec.step(&states[t], ut, t)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { timestep: t + 1 });
        }
        states.push(next);
    }
    let mut op = OperatingPoint::new(states, controls)?;
    op.mark_consistent();
    Ok(op)
}

/// Closed-loop rollout of affine feedback strategies about a reference
/// operating point: `u_t^i = ū_t^i − P_t^i (x_t − x̄_t) − α_t^i`.
///
/// The reference supplies `(x̄, ū)`; it need not be dynamically consistent.
pub fn rollout(
    spec: &SystemSpec,
    x1: &DVector<f64>,
    strategies: &[AffineStrategy],
    reference: &OperatingPoint,
) -> Result<OperatingPoint> {
    spec.check_state(x1)?;
    if strategies.len() != spec.num_players() {
        return Err(Error::DimensionMismatch {
            what: "strategy count".into(),
            expected: spec.num_players(),
            actual: strategies.len(),
        });
    }
    let horizon = reference.horizon();
    for (i, s) in strategies.iter().enumerate() {
        if s.horizon() != horizon {
            return Err(Error::DimensionMismatch {
                what: format!("strategy horizon for player {i}"),
                expected: horizon,
                actual: s.horizon(),
            });
        }
    }

    let mut states = Vec::with_capacity(horizon + 1);
    let mut controls = Vec::with_capacity(horizon);
    states.push(x1.clone());
    for t in 0..horizon {
        let dx = &states[t] - reference.state(t);
        let mut ut = Vec::with_capacity(strategies.len());
        for (i, strategy) in strategies.iter().enumerate() {
            let u = reference.control(t, i)
                - strategy.gain(t) * &dx
                - strategy.feedforward(t);
            if !u.iter().all(|v| v.is_finite()) {
                return Err(Error::Divergence { timestep: t + 1 });
            }
            ut.push(u);
        }
        let next = spec.step(&states[t], &ut, t)?;
        if !next.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { timestep: t + 1 });
        }
        states.push(next);
        controls.push(ut);
    }
    let mut op = OperatingPoint::new(states, controls)?;
    op.mark_consistent();
    Ok(op)
}

/// Central-difference fallback for [`SystemSpec::linearize`], step 1e-6
/// relative (floored at 1e-8 absolute). Built-in models all carry analytic
/// Jacobians; this path serves custom models and verification.
pub fn linearize_finite_difference(
    spec: &SystemSpec,
    op: &OperatingPoint,
) -> Result<LinearizedDynamics> {
    let horizon = op.horizon();
    let mut a = Vec::with_capacity(horizon);
    let mut b = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let x = op.state(t);
        let u = &op.controls()[t];
        let n = spec.state_dim();
        let mut at = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = fd_step(x[k]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[k] += h;
            xm[k] -= h;
            let fp = spec.step(&xp, u, t)?;
            let fm = spec.step(&xm, u, t)?;
            at.set_column(k, &((fp - fm) / (2.0 * h)));
        }
        let mut bt = Vec::with_capacity(spec.num_players());
        for i in 0..spec.num_players() {
            let mi = spec.control_dim(i);
            let mut bi = DMatrix::zeros(n, mi);
            for k in 0..mi {
                let h = fd_step(u[i][k]);
                let mut up = u.clone();
                let mut um = u.clone();
                up[i][k] += h;
                um[i][k] -= h;
                let fp = spec.step(x, &up, t)?;
                let fm = spec.step(x, &um, t)?;
                bi.set_column(k, &((fp - fm) / (2.0 * h)));
            }
            bt.push(bi);
        }
        a.push(at);
        b.push(bt);
    }
    Ok(LinearizedDynamics { a, b })
}

fn fd_step(value: f64) -> f64 {
    (value.abs() * 1e-6).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bicycle_spec(dt: f64) -> SystemSpec {
        SystemSpec::new(
            Model::SingleBicycle(BicycleParams {
                inter_axle_length: 1.0,
            }),
            dt,
        )
        .unwrap()
    }

    #[test]
    fn bicycle_step_straight_line() {
        let spec = bicycle_spec(0.1);
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let u = [DVector::zeros(2)];
        let next = spec.step(&x, &u, 0).unwrap();
        let expected = DVector::from_vec(vec![0.1, 0.0, 0.0, 0.0, 1.0]);
        assert_relative_eq!(next, expected, epsilon = 1e-15);
    }

    #[test]
    fn unicycle_step_heading_north() {
        let spec = SystemSpec::new(Model::Unicycle, 0.1).unwrap();
        let x = DVector::from_vec(vec![0.0, 0.0, std::f64::consts::FRAC_PI_2, 2.0]);
        let u = [DVector::zeros(2)];
        let next = spec.step(&x, &u, 0).unwrap();
        assert_relative_eq!(next[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(next[1], 0.2, epsilon = 1e-15);
        assert_relative_eq!(next[2], std::f64::consts::FRAC_PI_2, epsilon = 1e-15);
        assert_relative_eq!(next[3], 2.0, epsilon = 1e-15);
    }

    #[test]
    fn quadrotor_hover_is_an_equilibrium() {
        let spec = SystemSpec::new(Model::Quadrotor14(QuadrotorParams::default()), 0.1).unwrap();
        let mut x = DVector::zeros(14);
        x[9] = 9.81; // thrust balances gravity at unit mass
        let u = [DVector::zeros(4)];
        let next = spec.step(&x, &u, 0).unwrap();
        assert_relative_eq!(next, x, epsilon = 1e-15);
    }

    #[test]
    fn step_rejects_wrong_control_dimension() {
        let spec = bicycle_spec(0.1);
        let x = DVector::zeros(5);
        let u = [DVector::zeros(3)];
        let err = spec.step(&x, &u, 0).unwrap_err();
        match err {
            Error::DimensionMismatch { what, expected, actual } => {
                assert!(what.contains("player 0"), "got {what}");
                assert_eq!((expected, actual), (2, 3));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn linear_model_linearizes_to_itself() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 0.1]);
        let spec = SystemSpec::new(
            Model::Linear(LinearModel::single_player(a.clone(), b.clone())),
            0.1,
        )
        .unwrap();
        let op = OperatingPoint::zeros(&spec, 3);
        let lin = spec.linearize(&op).unwrap();
        for t in 0..3 {
            assert_eq!(lin.a[t], a);
            assert_eq!(lin.b[t][0], b);
        }
    }

    #[test]
    fn bicycle_heading_sensitivity_matches_closed_form() {
        let spec = bicycle_spec(0.1);
        let mut op = OperatingPoint::zeros(&spec, 1);
        op.states[0][4] = 1.0; // v = 1, θ = 0
        let lin = spec.linearize(&op).unwrap();
        // ∂(p_y-update)/∂θ = dt·v·cos(θ)
        assert_relative_eq!(lin.a[0][(1, 2)], 0.1, epsilon = 1e-15);
    }

    #[test]
    fn rollout_zero_strategy_fixed_point() {
        let spec = bicycle_spec(0.1);
        let x1 = DVector::from_vec(vec![0.0, 0.0, 0.3, 0.05, 1.5]);
        let controls = (0..10)
            .map(|t| vec![DVector::from_vec(vec![0.01 * t as f64, -0.02])])
            .collect();
        let reference = simulate(&spec, &x1, controls).unwrap();
        let strategies = vec![AffineStrategy::zeros(10, 2, 5)];
        let rolled = rollout(&spec, &x1, &strategies, &reference).unwrap();
        assert!(rolled.is_dynamically_consistent());
        assert!(rolled.state_distance(&reference) < 1e-14);
    }

    #[test]
    fn rollout_deadbeat_scalar() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let spec =
            SystemSpec::new(Model::Linear(LinearModel::single_player(a, b)), 1.0).unwrap();
        let horizon = 4;
        let reference = OperatingPoint::zeros(&spec, horizon);
        let mut strategy = AffineStrategy::zeros(horizon, 1, 1);
        for t in 0..horizon {
            strategy.gains[t][(0, 0)] = 1.0;
        }
        let x1 = DVector::from_element(1, 1.0);
        let op = rollout(&spec, &x1, &[strategy], &reference).unwrap();
        assert_relative_eq!(op.state(0)[0], 1.0);
        for t in 1..=horizon {
            assert_relative_eq!(op.state(t)[0], 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rollout_reports_first_divergent_timestep() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let b = DMatrix::from_element(1, 1, 2.0);
        let spec =
            SystemSpec::new(Model::Linear(LinearModel::single_player(a, b)), 1.0).unwrap();
        let reference = OperatingPoint::zeros(&spec, 3);
        let mut strategy = AffineStrategy::zeros(3, 1, 1);
        strategy.gains[0][(0, 0)] = -f64::MAX; // 2·MAX overflows the first update
        let x1 = DVector::from_element(1, 1.0);
        let err = rollout(&spec, &x1, &[strategy], &reference).unwrap_err();
        assert!(matches!(err, Error::Divergence { timestep: 1 }));
    }

    #[test]
    fn product_blocks_are_disjoint() {
        let model = Model::Product(vec![
            Model::SingleBicycle(BicycleParams {
                inter_axle_length: 1.0,
            }),
            Model::Unicycle,
        ]);
        let spec = SystemSpec::new(model, 0.1).unwrap();
        assert_eq!(spec.state_dim(), 9);
        assert_eq!(spec.control_dims(), &[2, 2]);
        assert_eq!(spec.position_indices(1), Some(vec![5, 6]));

        let mut op = OperatingPoint::zeros(&spec, 1);
        op.states[0] = DVector::from_vec(vec![0.0, 0.0, 0.2, 0.1, 1.0, 1.0, 2.0, -0.4, 0.7]);
        let lin = spec.linearize(&op).unwrap();
        // A block-diagonal over subsystems, B^i supported on subsystem rows only.
        for r in 0..5 {
            for c in 5..9 {
                assert_eq!(lin.a[0][(r, c)], 0.0);
                assert_eq!(lin.a[0][(c, r)], 0.0);
            }
        }
        for r in 5..9 {
            assert_eq!(lin.b[0][0].row(r).amax(), 0.0);
        }
        for r in 0..5 {
            assert_eq!(lin.b[0][1].row(r).amax(), 0.0);
        }
    }

    #[test]
    fn consistency_flag_follows_residual() {
        let spec = bicycle_spec(0.1);
        let x1 = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        let controls: Vec<Vec<DVector<f64>>> =
            (0..5).map(|_| vec![DVector::zeros(2)]).collect();
        let op = simulate(&spec, &x1, controls.clone()).unwrap();
        assert!(op.is_dynamically_consistent());

        let mut states = op.states().to_vec();
        states[3][0] += 1e-6;
        let broken = OperatingPoint::new(states, controls)
            .unwrap()
            .with_consistency_checked(&spec)
            .unwrap();
        assert!(!broken.is_dynamically_consistent());
    }
}
