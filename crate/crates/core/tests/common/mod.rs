//! Shared test oracles: independent Riccati recursions, best-response
//! iteration, brute-force control enumeration, and a high-accuracy flow
//! integrator. These deliberately avoid the library's solver code paths.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use reachgames::{AffineStrategy, LinearizedDynamics, QuadraticCostTerms};

/// Textbook affine LQR backward recursion for time-varying dynamics
/// `x' = Ā_t x + B_t u + c_t` and costs `½xᵀQx + qᵀx + ½uᵀRu + rᵀu`,
/// written directly from the normal equations.
pub fn affine_lqr(
    a: &[DMatrix<f64>],
    b: &[DMatrix<f64>],
    drift: &[DVector<f64>],
    q: &[DMatrix<f64>],
    qlin: &[DVector<f64>],
    r: &[DMatrix<f64>],
    rlin: &[DVector<f64>],
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let horizon = a.len();
    let mut z = q[horizon].clone();
    let mut zeta = qlin[horizon].clone();
    let mut gains = Vec::with_capacity(horizon);
    let mut ffs = Vec::with_capacity(horizon);
    gains.resize(horizon, DMatrix::zeros(0, 0));
    ffs.resize(horizon, DVector::zeros(0));
    for t in (0..horizon).rev() {
        let m = &r[t] + b[t].transpose() * &z * &b[t];
        let minv = m.clone().try_inverse().expect("regular control Hessian");
        let k = &minv * b[t].transpose() * &z * &a[t];
        let kv = &minv * (b[t].transpose() * (&z * &drift[t] + &zeta) + &rlin[t]);
        let z_new = &q[t] + a[t].transpose() * &z * &a[t] - k.transpose() * &m * &k;
        let zeta_new = &qlin[t]
            + a[t].transpose() * (&z * (&drift[t] - &b[t] * &kv) + &zeta);
        z = (&z_new + z_new.transpose()) * 0.5;
        zeta = zeta_new;
        gains[t] = k;
        ffs[t] = kv;
    }
    (gains, ffs)
}

/// Player `i`'s exact best response to the other players' fixed affine
/// strategies: substitutes them into the dynamics and solves the resulting
/// affine LQR. Assumes zero cross control costs `R^{ij}, j≠i` (the library
/// default).
pub fn best_response(
    lin: &LinearizedDynamics,
    quad: &QuadraticCostTerms,
    strategies: &[AffineStrategy],
    player: usize,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let horizon = lin.horizon();
    let n = lin.state_dim();
    let mut a = Vec::with_capacity(horizon);
    let mut b = Vec::with_capacity(horizon);
    let mut drift = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let mut abar = lin.a[t].clone();
        let mut c = DVector::zeros(n);
        for (j, strategy) in strategies.iter().enumerate() {
            if j == player {
                continue;
            }
            abar -= &lin.b[t][j] * &strategy.gains[t];
            c -= &lin.b[t][j] * &strategy.feedforwards[t];
        }
        a.push(abar);
        b.push(lin.b[t][player].clone());
        drift.push(c);
    }
    let r: Vec<DMatrix<f64>> = (0..horizon)
        .map(|t| quad.control_hessians[t][player].clone())
        .collect();
    let rlin: Vec<DVector<f64>> = (0..horizon)
        .map(|t| quad.control_gradients[t][player].clone())
        .collect();
    affine_lqr(
        &a,
        &b,
        &drift,
        &quad.state_hessians,
        &quad.state_gradients,
        &r,
        &rlin,
    )
}

/// Iterates exact best responses until the strategy profile stops changing;
/// the fixed point is a feedback Nash equilibrium of the LQ game.
pub fn best_response_fixed_point(
    lin: &LinearizedDynamics,
    quads: &[QuadraticCostTerms],
    max_rounds: usize,
    tol: f64,
) -> Option<Vec<AffineStrategy>> {
    let horizon = lin.horizon();
    let n = lin.state_dim();
    let mut strategies: Vec<AffineStrategy> = (0..quads.len())
        .map(|i| AffineStrategy::zeros(horizon, lin.b[0][i].ncols(), n))
        .collect();
    for _ in 0..max_rounds {
        let mut change: f64 = 0.0;
        for i in 0..quads.len() {
            let (gains, ffs) = best_response(lin, &quads[i], &strategies, i);
            for t in 0..horizon {
                change = change.max((&gains[t] - &strategies[i].gains[t]).abs().max());
                change = change.max((&ffs[t] - &strategies[i].feedforwards[t]).abs().max());
            }
            strategies[i] = AffineStrategy {
                gains,
                feedforwards: ffs,
            };
        }
        if change < tol {
            return Some(strategies);
        }
    }
    None
}

/// Exhaustive search over per-step control grids for a scalar system
/// `x' = a·x + b·u`, minimizing the max over all visited states (including
/// the initial one) of `g`.
pub fn grid_search_scalar_max(
    a: f64,
    b: f64,
    x1: f64,
    horizon: usize,
    levels: &[f64],
    g: impl Fn(f64) -> f64 + Copy,
) -> f64 {
    fn recurse(
        a: f64,
        b: f64,
        x: f64,
        remaining: usize,
        levels: &[f64],
        g: impl Fn(f64) -> f64 + Copy,
        max_so_far: f64,
        best: &mut f64,
    ) {
        if max_so_far >= *best {
            return; // cannot beat the incumbent: max only grows
        }
        if remaining == 0 {
            *best = max_so_far;
            return;
        }
        for &u in levels {
            let next = a * x + b * u;
            let m = max_so_far.max(g(next));
            recurse(a, b, next, remaining - 1, levels, g, m, best);
        }
    }
    let mut best = f64::INFINITY;
    recurse(a, b, x1, horizon, levels, g, g(x1), &mut best);
    best
}

/// Uniformly spaced control grid with `levels` points on `[lo, hi]`.
pub fn control_grid(lo: f64, hi: f64, levels: usize) -> Vec<f64> {
    (0..levels)
        .map(|k| lo + (hi - lo) * k as f64 / (levels - 1) as f64)
        .collect()
}

/// One RK4 step of `ẋ = f(x, u)` with piecewise-constant control.
pub fn rk4_step(
    f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    let k1 = f(x, u);
    let k2 = f(&(x + &k1 * (dt / 2.0)), u);
    let k3 = f(&(x + &k2 * (dt / 2.0)), u);
    let k4 = f(&(x + &k3 * dt), u);
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// High-accuracy flow of `ẋ = f(x, u)` over `dt` via RK4 substeps.
pub fn reference_flow(
    f: &dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    substeps: usize,
) -> DVector<f64> {
    let h = dt / substeps as f64;
    let mut state = x.clone();
    for _ in 0..substeps {
        state = rk4_step(f, &state, u, h);
    }
    state
}

/// Random symmetric PSD matrix `LLᵀ` with entries of modest scale.
pub fn random_psd(rng: &mut impl Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..scale));
    &l * l.transpose()
}

pub fn random_vector(rng: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

use reachgames::{
    Aggregation, BicycleParams, InstantaneousCost, Model, PlayerCost, SystemSpec,
};

/// Three kinematic bicycles on a circle of radius `radius`, all heading for
/// the center at speed `speed`, each penalized (max over time) for the
/// smallest separation from the other two.
pub fn three_player_avoidance(
    desired_separation: f64,
    radius: f64,
    speed: f64,
    epsilon: f64,
) -> (SystemSpec, Vec<PlayerCost>, DVector<f64>) {
    let model = Model::Product(vec![
        Model::SingleBicycle(BicycleParams {
            inter_axle_length: 1.0,
        }),
        Model::SingleBicycle(BicycleParams {
            inter_axle_length: 1.0,
        }),
        Model::SingleBicycle(BicycleParams {
            inter_axle_length: 1.0,
        }),
    ]);
    let spec = SystemSpec::new(model, 0.1).unwrap();

    let angles = [
        std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2 + 2.0 * std::f64::consts::FRAC_PI_3,
        std::f64::consts::FRAC_PI_2 + 4.0 * std::f64::consts::FRAC_PI_3,
    ];
    let mut x1 = DVector::zeros(15);
    for (i, &angle) in angles.iter().enumerate() {
        let off = 5 * i;
        x1[off] = radius * angle.cos();
        x1[off + 1] = radius * angle.sin();
        x1[off + 2] = angle + std::f64::consts::PI;
        x1[off + 3] = 0.0;
        x1[off + 4] = speed;
    }

    let costs = (0..3)
        .map(|i| {
            let own = [5 * i, 5 * i + 1];
            let opponents: Vec<[usize; 2]> = (0..3)
                .filter(|&j| j != i)
                .map(|j| [5 * j, 5 * j + 1])
                .collect();
            PlayerCost::new(
                InstantaneousCost::ProximityAvoid {
                    desired_separation,
                    own_position: own,
                    opponent_positions: opponents,
                },
                Aggregation::Max,
                epsilon,
            )
        })
        .collect();
    (spec, costs, x1)
}
