//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ahmpc::controller::{SimulationLog, StepRecord};
use ahmpc::dynamics::{
    pendulum_vector_field, ControlVec, DoubleIntegrator, DoublePendulum, Model, PendulumParams,
    StateVec,
};
use ahmpc::ocp::{total_cost, OcpProblem};
use ahmpc::terminal::{QuadLagrangian, TerminalPair};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize, half_width: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-half_width..half_width))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, floor: f64) -> DMatrix<f64> {
    let c = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    &c.transpose() * &c + DMatrix::identity(n, n) * floor
}

// ---------------------------------------------------------------- pendulum

/// Lagrangian `T − V` built from the Cartesian positions of the two masses.
fn lagrangian(p: &PendulumParams, q: Vector2<f64>, qd: Vector2<f64>) -> f64 {
    let pos = |q1: f64, q2: f64| {
        let j = Vector2::new(-p.l1 * q1.sin(), p.l1 * q1.cos());
        let t = j + Vector2::new(-p.l2 * q2.sin(), p.l2 * q2.cos());
        (j, t)
    };
    let (j, t) = pos(q[0], q[1]);
    // velocities by exact differentiation of `pos` along qd
    let jd = Vector2::new(-p.l1 * q[0].cos(), -p.l1 * q[0].sin()) * qd[0];
    let td = jd + Vector2::new(-p.l2 * q[1].cos(), -p.l2 * q[1].sin()) * qd[1];
    let kinetic = 0.5 * p.m1 * jd.norm_squared() + 0.5 * p.m2 * td.norm_squared();
    let potential = p.g * (p.m1 * j[1] + p.m2 * t[1]);
    kinetic - potential
}

/// Accelerations from the Euler–Lagrange equations with every partial
/// derivative of the Lagrangian taken by central differences.
pub fn euler_lagrange_accel(p: &PendulumParams, x: &StateVec, u: &ControlVec) -> Vector2<f64> {
    let q = Vector2::new(x[0], x[1]);
    let qd = Vector2::new(x[2], x[3]);
    let l = |q: Vector2<f64>, qd: Vector2<f64>| lagrangian(p, q, qd);
    let e = [Vector2::new(1.0, 0.0), Vector2::new(0.0, 1.0)];
    let h = 1e-4;

    let mut mass = Matrix2::zeros();
    let mut mixed = Matrix2::zeros(); // ∂²L/∂q̇ᵢ∂qⱼ
    let mut dl_dq = Vector2::zeros();
    for i in 0..2 {
        dl_dq[i] = (l(q + e[i] * h, qd) - l(q - e[i] * h, qd)) / (2.0 * h);
        for j in 0..2 {
            mass[(i, j)] = (l(q, qd + e[i] * h + e[j] * h)
                - l(q, qd + e[i] * h - e[j] * h)
                - l(q, qd - e[i] * h + e[j] * h)
                + l(q, qd - e[i] * h - e[j] * h))
                / (4.0 * h * h);
            mixed[(i, j)] = (l(q + e[j] * h, qd + e[i] * h)
                - l(q - e[j] * h, qd + e[i] * h)
                - l(q + e[j] * h, qd - e[i] * h)
                + l(q - e[j] * h, qd - e[i] * h))
                / (4.0 * h * h);
        }
    }
    let torque = Vector2::new(u[0] - u[1], u[1]);
    let rhs = torque + dl_dq - mixed * qd;
    mass.lu().solve(&rhs).expect("mass matrix invertible")
}

/// `dE/dt` along the vector field minus the power delivered by the torques,
/// both in generalized coordinates: `q̇ᵀMq̈ + ½q̇ᵀṀq̇ + ∇V·q̇ − τ·q̇`.
pub fn power_residual(
    p: &PendulumParams,
    x: &StateVec,
    u: &ControlVec,
    rate: &StateVec,
) -> (f64, f64) {
    let (q1, q2, w1, w2) = (x[0], x[1], x[2], x[3]);
    let (a1, a2) = (rate[2], rate[3]);
    let c = p.m2 * p.l1 * p.l2;
    let m11 = (p.m1 + p.m2) * p.l1 * p.l1;
    let m22 = p.m2 * p.l2 * p.l2;
    let m12 = c * (q1 - q2).cos();
    let m12_dot = -c * (q1 - q2).sin() * (w1 - w2);
    let kinetic_rate = w1 * (m11 * a1 + m12 * a2) + w2 * (m12 * a1 + m22 * a2) + m12_dot * w1 * w2;
    // V = g[(m1+m2) l1 cos q1 + m2 l2 cos q2]
    let potential_rate =
        -p.g * ((p.m1 + p.m2) * p.l1 * q1.sin() * w1 + p.m2 * p.l2 * q2.sin() * w2);
    let power = (u[0] - u[1]) * w1 + u[1] * w2;
    let residual = kinetic_rate + potential_rate - power;
    let scale = kinetic_rate.abs() + potential_rate.abs() + power.abs();
    (residual, scale)
}

/// Small-angle linearization `ẋ = Ax + Bu` of the pendulum about upright.
pub fn upright_linearization(p: &PendulumParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let c = p.m2 * p.l1 * p.l2;
    let mass = Matrix2::new((p.m1 + p.m2) * p.l1 * p.l1, c, c, p.m2 * p.l2 * p.l2);
    let stiffness = Matrix2::new((p.m1 + p.m2) * p.g * p.l1, 0.0, 0.0, p.m2 * p.g * p.l2);
    let torque_map = Matrix2::new(1.0, -1.0, 0.0, 1.0);
    let inv = mass.try_inverse().unwrap();
    let kq = inv * stiffness;
    let ku = inv * torque_map;
    let mut a = DMatrix::zeros(4, 4);
    let mut b = DMatrix::zeros(4, 2);
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    for i in 0..2 {
        for j in 0..2 {
            a[(2 + i, j)] = kq[(i, j)];
            b[(2 + i, j)] = ku[(i, j)];
        }
    }
    (a, b)
}

pub fn rk4(f: impl Fn(&StateVec) -> StateVec, x: &StateVec, h: f64) -> StateVec {
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Energy change over 1 s, relative to `max(|E₀|, g·(m₁l₁ + m₂(l₁+l₂)))`;
/// the second term keeps the ratio meaningful for starts with `E₀ ≈ 0`, such
/// as both legs horizontal.
pub fn energy_drift(p: &PendulumParams, x0: StateVec) -> f64 {
    let reference = p.g * (p.m1 * p.l1 + p.m2 * (p.l1 + p.l2));
    let zero = ControlVec::zeros(2);
    let f = |x: &StateVec| pendulum_vector_field(p, x, &zero).unwrap();
    let e0 = p.energy(&x0);
    let mut x = x0;
    for _ in 0..10_000 {
        x = rk4(f, &x, 1e-4);
    }
    (p.energy(&x) - e0).abs() / e0.abs().max(reference)
}

// ---------------------------------------------------------------- Riccati

/// Structure-preserving doubling iteration for
/// `P = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`.
pub fn doubling_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> DMatrix<f64> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut ak = a.clone();
    let mut gk = b * r.clone().try_inverse().unwrap() * b.transpose();
    let mut hk = q.clone();
    for _ in 0..100 {
        let w = (&eye + &gk * &hk).try_inverse().expect("I + GH invertible");
        let a_next = &ak * &w * &ak;
        let g_next = &gk + &ak * &w * &gk * ak.transpose();
        let h_next = &hk + ak.transpose() * &hk * &w * &ak;
        let change = (&h_next - &hk).norm();
        ak = a_next;
        gk = g_next;
        hk = h_next;
        if change <= 1e-14 * (1.0 + hk.norm()) {
            break;
        }
    }
    hk
}

// ---------------------------------------------------------------- LQ

/// Minimizes `½Σ(xᵀQx + uᵀRu) + ½x_NᵀPx_N` for `x⁺ = Ax + Bu` by stacking the
/// controls into one vector and solving the normal equations.
pub fn batch_lq(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
    x0: &DVector<f64>,
    horizon: usize,
) -> (f64, Vec<DVector<f64>>) {
    let (n, m) = b.shape();
    // x_k = Φ_k x0 + Γ_k U
    let mut phi = vec![DMatrix::identity(n, n)];
    let mut gamma = vec![DMatrix::zeros(n, m * horizon)];
    for k in 0..horizon {
        phi.push(a * &phi[k]);
        let mut g = a * &gamma[k];
        g.view_mut((0, m * k), (n, m)).copy_from(b);
        gamma.push(g);
    }
    let mut hess = DMatrix::zeros(m * horizon, m * horizon);
    let mut lin = DVector::zeros(m * horizon);
    let mut constant = 0.0;
    for k in 0..=horizon {
        let w = if k == horizon { p } else { q };
        hess += gamma[k].transpose() * w * &gamma[k];
        let free = &phi[k] * x0;
        lin += gamma[k].transpose() * w * &free;
        constant += free.dot(&(w * &free));
    }
    for k in 0..horizon {
        let mut block = hess.view_mut((m * k, m * k), (m, m));
        block += r;
    }
    let u = hess
        .clone()
        .cholesky()
        .expect("LQ Hessian SPD")
        .solve(&(-&lin));
    let cost = 0.5 * (u.dot(&(&hess * &u)) + 2.0 * lin.dot(&u) + constant);
    let controls = (0..horizon)
        .map(|k| u.rows(m * k, m).into_owned())
        .collect();
    (cost, controls)
}

// ---------------------------------------------------------------- gradient

pub fn pendulum_parts() -> (Model, QuadLagrangian, TerminalPair) {
    let model = Model::new(DoublePendulum::new(PendulumParams::default()).unwrap(), 0.1).unwrap();
    let lag = QuadLagrangian::scaled_identity(4, 2, 0.1, 0.1).unwrap();
    let tp = TerminalPair::lqr(&model, &lag, 0.1).unwrap();
    (model, lag, tp)
}

/// Random double-integrator LQ instance with a random positive definite
/// terminal weight (not the Riccati solution).
pub fn random_lq(rng: &mut rand_chacha::ChaCha8Rng) -> (Model, QuadLagrangian, TerminalPair) {
    let dt = rng.gen_range(0.05..0.5);
    let model = Model::new(DoubleIntegrator, dt).unwrap();
    let lag = QuadLagrangian::new(random_spd(rng, 2, 0.05), random_spd(rng, 1, 0.05)).unwrap();
    let p = random_spd(rng, 2, 0.1);
    let tp = TerminalPair::new(p, DMatrix::zeros(1, 2), 0.1, None).unwrap();
    (model, lag, tp)
}

pub fn max_relative_error(got: &[ControlVec], want: &[ControlVec]) -> f64 {
    let scale = want.iter().map(|g| g.amax()).fold(0.0, f64::max);
    let err = got
        .iter()
        .zip(want)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    err / scale.max(1e-12)
}

pub fn fd_gradient(problem: &OcpProblem<'_>, us: &[ControlVec], h: f64) -> Vec<ControlVec> {
    let mut out = Vec::with_capacity(us.len());
    for k in 0..us.len() {
        let mut g = ControlVec::zeros(us[k].len());
        for i in 0..us[k].len() {
            let mut plus = us.to_vec();
            let mut minus = us.to_vec();
            let step = h * (1.0 + us[k][i].abs());
            plus[k][i] += step;
            minus[k][i] -= step;
            g[i] = (total_cost(problem, &plus).unwrap() - total_cost(problem, &minus).unwrap())
                / (2.0 * step);
        }
        out.push(g);
    }
    out
}

// ---------------------------------------------------------------- controller

/// Window verdict recomputed from the logged extension states alone.
pub fn window_verdict(p: &DMatrix<f64>, alpha_coeff: f64, slack: f64, ext: &[StateVec]) -> bool {
    if ext.len() < 2 {
        return false;
    }
    let vf = |x: &StateVec| 0.5 * x.dot(&(p * x));
    ext.windows(2).all(|w| {
        let (v0, v1) = (vf(&w[0]), vf(&w[1]));
        let alpha = alpha_coeff * w[0].norm_squared();
        let threshold = alpha - slack;
        v0.is_finite() && v0 >= threshold && v1.is_finite() && v0 - v1 >= threshold
    })
}

/// Problems with the horizon transitions of a log: each decision's carried
/// horizon must move by −1 on a pass (0 stays 0), +1 on a failure, and match
/// the horizon the following decision starts from.
pub fn horizon_law_violations(log: &SimulationLog) -> Vec<String> {
    let mut bad = Vec::new();
    let advanced: Vec<&StepRecord> = log.advanced().collect();
    for r in &advanced {
        let delta = r.next_horizon as i64 - r.horizon as i64;
        let ok = match (r.window_pass, r.horizon) {
            (true, 0) => delta == 0,
            (true, _) => delta == -1,
            (false, n) => delta == 1 || (delta == 0 && n == r.next_horizon && r.saturated),
        };
        if !ok {
            bad.push(format!(
                "step {}: N {} -> {} with pass={}",
                r.step_index, r.horizon, r.next_horizon, r.window_pass
            ));
        }
    }
    for pair in log.records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let expected = if a.advanced {
            a.next_horizon
        } else {
            a.horizon + 1
        };
        if b.horizon != expected {
            bad.push(format!(
                "record at step {} starts at N={} but previous decision carried N={}",
                b.step_index, b.horizon, expected
            ));
        }
    }
    bad
}

/// Logged `ΔN` between consecutive plant-advancing decisions.
pub fn advancing_deltas(log: &SimulationLog) -> Vec<(i64, bool)> {
    log.advanced()
        .map(|r| (r.next_horizon as i64 - r.horizon as i64, r.window_pass))
        .collect()
}

pub fn linear_model_matrices(model: &Model) -> (DMatrix<f64>, DMatrix<f64>) {
    let lin = model
        .linearize(&StateVec::zeros(model.n()), &ControlVec::zeros(model.m()))
        .unwrap();
    (lin.a, lin.b)
}
