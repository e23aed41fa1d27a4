//! Built-in vehicle models: kinematic bicycle, planar unicycle, and a
//! 14-state quadrotor, plus exact linear systems and products of
//! per-player subsystems.

use nalgebra::{DMatrix, DVector};

/// Standard gravity, m/s².
pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Kinematic bicycle parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct BicycleParams {
    /// Inter-axle distance L, meters. Must be positive; enforces a minimum
    /// turning radius.
    pub inter_axle_length: f64,
}

/// Quadrotor mass/inertia parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadrotorParams {
    pub mass: f64,
    pub inertia_x: f64,
    pub inertia_y: f64,
    pub inertia_z: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl Default for QuadrotorParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia_x: 1.0,
            inertia_y: 1.0,
            inertia_z: 1.0,
            gravity: DEFAULT_GRAVITY,
        }
    }
}

/// An exact discrete-time affine system `x' = A x + Σ_i B_i u_i`,
/// one input matrix per player.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: Vec<DMatrix<f64>>,
}

impl LinearModel {
    pub fn single_player(a: DMatrix<f64>, b: DMatrix<f64>) -> Self {
        Self { a, b: vec![b] }
    }
}

/// A dynamical model. Continuous-time models are Euler-discretized by the
/// owning [`super::SystemSpec`]; linear models update exactly.
///
/// Multi-player games are built either as a [`Model::Linear`] system with one
/// input matrix per player or as a [`Model::Product`] of single-player
/// subsystems, one per player.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Kinematic bicycle, state (p_x, p_y, θ, φ, v), controls (ω, a):
    /// front-wheel angular rate and linear acceleration.
    SingleBicycle(BicycleParams),
    /// Planar unicycle, state (p_x, p_y, θ, v), controls (ω, a).
    Unicycle,
    /// 14-state quadrotor with a double integrator on thrust, state
    /// (p_x, p_y, p_z, ψ, θ, φ, v_x, v_y, v_z, ζ, ξ, p, q, r), controls
    /// (τ, α_x, α_y, α_z).
    Quadrotor14(QuadrotorParams),
    /// Exact discrete-time affine system; supports any player count.
    Linear(LinearModel),
    /// Product of single-player subsystems; subsystem i is driven by
    /// player i's controls and the joint state is the concatenation.
    Product(Vec<Model>),
}

impl Model {
    pub fn state_dim(&self) -> usize {
        match self {
            Model::SingleBicycle(_) => 5,
            Model::Unicycle => 4,
            Model::Quadrotor14(_) => 14,
            Model::Linear(m) => m.a.nrows(),
            Model::Product(subs) => subs.iter().map(Model::state_dim).sum(),
        }
    }

    pub fn control_dims(&self) -> Vec<usize> {
        match self {
            Model::SingleBicycle(_) | Model::Unicycle => vec![2],
            Model::Quadrotor14(_) => vec![4],
            Model::Linear(m) => m.b.iter().map(|b| b.ncols()).collect(),
            Model::Product(subs) => subs
                .iter()
                .flat_map(|s| s.control_dims())
                .collect(),
        }
    }

    /// Continuous-time vector field for Euler-discretized models.
    /// Returns `None` for linear models, which update exactly.
    pub fn vector_field(&self, x: &DVector<f64>, u: &DVector<f64>) -> Option<DVector<f64>> {
        match self {
            Model::SingleBicycle(p) => Some(bicycle_vf(x, u, p.inter_axle_length)),
            Model::Unicycle => Some(unicycle_vf(x, u)),
            Model::Quadrotor14(p) => Some(quadrotor_vf(x, u, p)),
            Model::Linear(_) | Model::Product(_) => None,
        }
    }

    /// Jacobians (∂f/∂x, ∂f/∂u) of the continuous vector field.
    pub(crate) fn vector_field_jacobians(
        &self,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        match self {
            Model::SingleBicycle(p) => Some(bicycle_jacobians(x, u, p.inter_axle_length)),
            Model::Unicycle => Some(unicycle_jacobians(x)),
            Model::Quadrotor14(p) => Some(quadrotor_jacobians(x, p)),
            Model::Linear(_) | Model::Product(_) => None,
        }
    }
}

fn bicycle_vf(x: &DVector<f64>, u: &DVector<f64>, length: f64) -> DVector<f64> {
    let (theta, phi, v) = (x[2], x[3], x[4]);
    DVector::from_vec(vec![
        v * theta.cos(),
        v * theta.sin(),
        v * phi.tan() / length,
        u[0],
        u[1],
    ])
}

fn bicycle_jacobians(x: &DVector<f64>, _u: &DVector<f64>, length: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let (theta, phi, v) = (x[2], x[3], x[4]);
    let mut dfdx = DMatrix::zeros(5, 5);
    dfdx[(0, 2)] = -v * theta.sin();
    dfdx[(0, 4)] = theta.cos();
    dfdx[(1, 2)] = v * theta.cos();
    dfdx[(1, 4)] = theta.sin();
    let sec = 1.0 / phi.cos();
    dfdx[(2, 3)] = v * sec * sec / length;
    dfdx[(2, 4)] = phi.tan() / length;
    let mut dfdu = DMatrix::zeros(5, 2);
    dfdu[(3, 0)] = 1.0;
    dfdu[(4, 1)] = 1.0;
    (dfdx, dfdu)
}

fn unicycle_vf(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let (theta, v) = (x[2], x[3]);
    DVector::from_vec(vec![v * theta.cos(), v * theta.sin(), u[0], u[1]])
}

fn unicycle_jacobians(x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (theta, v) = (x[2], x[3]);
    let mut dfdx = DMatrix::zeros(4, 4);
    dfdx[(0, 2)] = -v * theta.sin();
    dfdx[(0, 3)] = theta.cos();
    dfdx[(1, 2)] = v * theta.cos();
    dfdx[(1, 3)] = theta.sin();
    let mut dfdu = DMatrix::zeros(4, 2);
    dfdu[(2, 0)] = 1.0;
    dfdu[(3, 1)] = 1.0;
    (dfdx, dfdu)
}

// Quadrotor state layout:
//   0 p_x  1 p_y  2 p_z  3 ψ  4 θ  5 φ  6 v_x  7 v_y  8 v_z
//   9 ζ (thrust)  10 ξ (thrust rate)  11 p  12 q  13 r
// controls: 0 τ (thrust second derivative), 1 α_x, 2 α_y, 3 α_z.
fn quadrotor_vf(x: &DVector<f64>, u: &DVector<f64>, p: &QuadrotorParams) -> DVector<f64> {
    let (psi, theta, phi) = (x[3], x[4], x[5]);
    let zeta = x[9];
    let gx = (phi.sin() * psi.sin() + phi.cos() * psi.cos() * theta.sin()) / p.mass;
    let gy = (phi.cos() * psi.sin() * theta.sin() - psi.cos() * phi.sin()) / p.mass;
    let gz = phi.cos() * theta.cos() / p.mass;
    DVector::from_vec(vec![
        x[6],
        x[7],
        x[8],
        x[12],
        x[13],
        x[11],
        gx * zeta,
        gy * zeta,
        gz * zeta - p.gravity,
        x[10],
        u[0],
        u[1] / p.inertia_x,
        u[2] / p.inertia_y,
        u[3] / p.inertia_z,
    ])
}

fn quadrotor_jacobians(x: &DVector<f64>, p: &QuadrotorParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let (psi, theta, phi) = (x[3], x[4], x[5]);
    let zeta = x[9];
    let m = p.mass;
    let (sps, cps) = (psi.sin(), psi.cos());
    let (sth, cth) = (theta.sin(), theta.cos());
    let (sph, cph) = (phi.sin(), phi.cos());

    let gx = (sph * sps + cph * cps * sth) / m;
    let gy = (cph * sps * sth - cps * sph) / m;
    let gz = cph * cth / m;
    let dgx_dpsi = (sph * cps - cph * sps * sth) / m;
    let dgx_dtheta = cph * cps * cth / m;
    let dgx_dphi = (cph * sps - sph * cps * sth) / m;
    let dgy_dpsi = (cph * cps * sth + sps * sph) / m;
    let dgy_dtheta = cph * sps * cth / m;
    let dgy_dphi = (-sph * sps * sth - cps * cph) / m;
    let dgz_dtheta = -cph * sth / m;
    let dgz_dphi = -sph * cth / m;

    let mut dfdx = DMatrix::zeros(14, 14);
    dfdx[(0, 6)] = 1.0;
    dfdx[(1, 7)] = 1.0;
    dfdx[(2, 8)] = 1.0;
    dfdx[(3, 12)] = 1.0;
    dfdx[(4, 13)] = 1.0;
    dfdx[(5, 11)] = 1.0;
    dfdx[(6, 3)] = dgx_dpsi * zeta;
    dfdx[(6, 4)] = dgx_dtheta * zeta;
    dfdx[(6, 5)] = dgx_dphi * zeta;
    dfdx[(6, 9)] = gx;
    dfdx[(7, 3)] = dgy_dpsi * zeta;
    dfdx[(7, 4)] = dgy_dtheta * zeta;
    dfdx[(7, 5)] = dgy_dphi * zeta;
    dfdx[(7, 9)] = gy;
    dfdx[(8, 4)] = dgz_dtheta * zeta;
    dfdx[(8, 5)] = dgz_dphi * zeta;
    dfdx[(8, 9)] = gz;
    dfdx[(9, 10)] = 1.0;

    let mut dfdu = DMatrix::zeros(14, 4);
    dfdu[(10, 0)] = 1.0;
    dfdu[(11, 1)] = 1.0 / p.inertia_x;
    dfdu[(12, 2)] = 1.0 / p.inertia_y;
    dfdu[(13, 3)] = 1.0 / p.inertia_z;
    (dfdx, dfdu)
}
