//! Horizon-N optimal control problem: rollout, cost, adjoint gradient, and an
//! iLQR (Gauss-Newton) solver with Levenberg regularization.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ControlVec, LinearizedModel, Model, StateVec};
use crate::error::{ensure_dim, Error, Result};
use crate::terminal::{QuadLagrangian, TerminalPair};

/// Minimize `Σₖ l(x(k), u(k)) + V_f(x(N))` over `u(0..N)` from `x(0) = x0`.
/// No terminal constraint is imposed.
#[derive(Clone, Copy, Debug)]
pub struct OcpProblem<'a> {
    pub model: &'a Model,
    pub lagrangian: &'a QuadLagrangian,
    pub terminal: &'a TerminalPair,
    pub x0: &'a StateVec,
    pub horizon: usize,
}

impl<'a> OcpProblem<'a> {
    pub fn new(
        model: &'a Model,
        lagrangian: &'a QuadLagrangian,
        terminal: &'a TerminalPair,
        x0: &'a StateVec,
        horizon: usize,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidHorizon(horizon));
        }
        ensure_dim("initial state", model.n(), x0.len())?;
        ensure_dim("lagrangian Q", model.n(), lagrangian.q().nrows())?;
        ensure_dim("lagrangian R", model.m(), lagrangian.r().nrows())?;
        ensure_dim("terminal cost", model.n(), terminal.p().nrows())?;
        ensure_dim("terminal gain", model.m(), terminal.k().nrows())?;
        Ok(Self {
            model,
            lagrangian,
            terminal,
            x0,
            horizon,
        })
    }

    fn check_controls(&self, u_seq: &[ControlVec]) -> Result<()> {
        ensure_dim("control sequence length", self.horizon, u_seq.len())
    }

    /// Cost of an already rolled-out trajectory.
    pub fn trajectory_cost(&self, x_seq: &[StateVec], u_seq: &[ControlVec]) -> f64 {
        let running: f64 = x_seq
            .iter()
            .zip(u_seq)
            .map(|(x, u)| self.lagrangian.stage_cost(x, u))
            .sum();
        running + self.terminal.terminal_cost(&x_seq[u_seq.len()])
    }
}

/// States `x(0..=N)` obtained by iterating the Euler step from `x0`.
pub fn rollout(model: &Model, x0: &StateVec, u_seq: &[ControlVec]) -> Result<Vec<StateVec>> {
    let mut xs = Vec::with_capacity(u_seq.len() + 1);
    xs.push(x0.clone());
    for (step, u) in u_seq.iter().enumerate() {
        ensure_dim("control", model.m(), u.len())?;
        if let Some(entry) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "control sequence",
                entry,
                value: u[entry],
            });
        }
        let next = match model.step_euler(&xs[step], u) {
            Ok(x) => x,
            Err(Error::NonFinite { entry, .. }) => {
                return Err(Error::RolloutNonFinite {
                    step: step + 1,
                    entry,
                })
            }
            Err(e) => return Err(e),
        };
        xs.push(next);
    }
    Ok(xs)
}

pub fn total_cost(problem: &OcpProblem<'_>, u_seq: &[ControlVec]) -> Result<f64> {
    problem.check_controls(u_seq)?;
    let xs = rollout(problem.model, problem.x0, u_seq)?;
    Ok(problem.trajectory_cost(&xs, u_seq))
}

/// Exact gradient of [`total_cost`] with respect to each `u(k)`, by the
/// backward adjoint recursion through the step Jacobians.
pub fn cost_gradient(problem: &OcpProblem<'_>, u_seq: &[ControlVec]) -> Result<Vec<ControlVec>> {
    problem.check_controls(u_seq)?;
    let xs = rollout(problem.model, problem.x0, u_seq)?;
    let lins = linearize_along(problem.model, &xs, u_seq)?;
    Ok(adjoint_gradient(problem, &xs, u_seq, &lins))
}

fn linearize_along(
    model: &Model,
    xs: &[StateVec],
    us: &[ControlVec],
) -> Result<Vec<LinearizedModel>> {
    xs.iter()
        .zip(us)
        .map(|(x, u)| model.linearize(x, u))
        .collect()
}

fn adjoint_gradient(
    problem: &OcpProblem<'_>,
    xs: &[StateVec],
    us: &[ControlVec],
    lins: &[LinearizedModel],
) -> Vec<ControlVec> {
    let q = problem.lagrangian.q();
    let r = problem.lagrangian.r();
    let mut lambda = problem.terminal.terminal_cost_gradient(&xs[us.len()]);
    let mut grad = vec![DVector::zeros(problem.model.m()); us.len()];
    for k in (0..us.len()).rev() {
        let lin = &lins[k];
        grad[k] = r * &us[k] + lin.b.tr_mul(&lambda);
        lambda = q * &xs[k] + lin.a.tr_mul(&lambda);
    }
    grad
}

fn max_norm(grad: &[ControlVec]) -> f64 {
    grad.iter().map(|g| g.amax()).fold(0.0, f64::max)
}

/// Gradient max-norm with components at an active bound dropped when they
/// point outward.
fn projected_max_norm(model: &Model, us: &[ControlVec], grad: &[ControlVec]) -> f64 {
    let Some(bounds) = model.bounds() else {
        return max_norm(grad);
    };
    let mut worst = 0.0f64;
    for (u, g) in us.iter().zip(grad) {
        for i in 0..u.len() {
            let blocked = (u[i] <= bounds.lower()[i] && g[i] > 0.0)
                || (u[i] >= bounds.upper()[i] && g[i] < 0.0);
            if !blocked {
                worst = worst.max(g[i].abs());
            }
        }
    }
    worst
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Gradient max-norm at which the solve stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

const REG_INIT: f64 = 1e-6;
const REG_MIN: f64 = 1e-6;
const REG_MAX: f64 = 1e8;
const STALL_REL_DECREASE: f64 = 1e-12;
const LINE_SEARCH_STEPS: i32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// Gradient max-norm fell below the tolerance.
    Gradient,
    /// An accepted step decreased the cost by less than `1e-12` relative.
    Stalled,
    /// No descent step found before the regularization cap.
    RegularizationCap,
    MaxIterations,
}

#[derive(Clone, Debug)]
pub struct OcpSolution {
    pub u_seq: Vec<ControlVec>,
    pub x_seq: Vec<StateVec>,
    pub cost: f64,
    pub grad_norm: f64,
    pub iters: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Cost of every accepted iterate, starting with the initial guess.
    pub cost_history: Vec<f64>,
}

struct Policy {
    feedforward: Vec<ControlVec>,
    feedback: Vec<DMatrix<f64>>,
}

fn backward_pass(
    problem: &OcpProblem<'_>,
    xs: &[StateVec],
    us: &[ControlVec],
    lins: &[LinearizedModel],
    reg: f64,
) -> Option<Policy> {
    let n_steps = us.len();
    let q = problem.lagrangian.q();
    let r = problem.lagrangian.r();
    let m = problem.model.m();
    let mut vx = problem.terminal.terminal_cost_gradient(&xs[n_steps]);
    let mut vxx = problem.terminal.p().clone();
    let mut feedforward = vec![DVector::zeros(m); n_steps];
    let mut feedback = vec![DMatrix::zeros(m, problem.model.n()); n_steps];

    for k in (0..n_steps).rev() {
        let LinearizedModel { a, b } = &lins[k];
        let vxx_a = &vxx * a;
        let vxx_b = &vxx * b;
        let qx = q * &xs[k] + a.tr_mul(&vx);
        let qu = r * &us[k] + b.tr_mul(&vx);
        let qxx = q + a.tr_mul(&vxx_a);
        let quu = r + b.tr_mul(&vxx_b);
        let qux = b.tr_mul(&vxx_a);

        let chol = (&quu + DMatrix::identity(m, m) * reg).cholesky()?;
        let kff = -chol.solve(&qu);
        let kfb = -chol.solve(&qux);

        vx = qx + kfb.tr_mul(&(&quu * &kff)) + kfb.tr_mul(&qu) + qux.tr_mul(&kff);
        let v = qxx + kfb.tr_mul(&(&quu * &kfb)) + kfb.tr_mul(&qux) + qux.tr_mul(&kfb);
        vxx = (&v + v.transpose()) * 0.5;

        feedforward[k] = kff;
        feedback[k] = kfb;
    }
    Some(Policy {
        feedforward,
        feedback,
    })
}

fn forward_pass(
    problem: &OcpProblem<'_>,
    xs: &[StateVec],
    us: &[ControlVec],
    policy: &Policy,
    step: f64,
) -> Option<(Vec<StateVec>, Vec<ControlVec>, f64)> {
    let mut new_xs = Vec::with_capacity(xs.len());
    let mut new_us = Vec::with_capacity(us.len());
    new_xs.push(problem.x0.clone());
    for k in 0..us.len() {
        let dx = &new_xs[k] - &xs[k];
        let u = &us[k] + &policy.feedforward[k] * step + &policy.feedback[k] * dx;
        let u = problem.model.clamp(u);
        let next = problem.model.step_euler(&new_xs[k], &u).ok()?;
        new_us.push(u);
        new_xs.push(next);
    }
    let cost = problem.trajectory_cost(&new_xs, &new_us);
    cost.is_finite().then_some((new_xs, new_us, cost))
}

/// Local minimizer of the horizon-N problem, warm-started at `u_init`.
///
/// Each iteration linearizes along the current trajectory, runs a regularized
/// Riccati backward pass, and line-searches the closed-loop forward pass,
/// accepting any cost decrease. The returned cost never exceeds the cost of
/// `u_init` (after clamping into the control box). Hitting `max_iter` is not
/// an error: the best iterate is returned with `converged = false`.
pub fn solve_ocp(
    problem: &OcpProblem<'_>,
    u_init: &[ControlVec],
    opts: SolverOptions,
) -> Result<OcpSolution> {
    problem.check_controls(u_init)?;
    let mut us: Vec<ControlVec> = u_init
        .iter()
        .map(|u| problem.model.clamp(u.clone()))
        .collect();
    let mut xs = rollout(problem.model, problem.x0, &us)?;
    let mut cost = problem.trajectory_cost(&xs, &us);
    let mut cost_history = vec![cost];
    let mut reg = REG_INIT;
    let mut iters = 0;

    let termination = 'outer: loop {
        let lins = linearize_along(problem.model, &xs, &us)?;
        let grad = adjoint_gradient(problem, &xs, &us, &lins);
        if projected_max_norm(problem.model, &us, &grad) <= opts.tol {
            break Termination::Gradient;
        }
        if iters >= opts.max_iter {
            break Termination::MaxIterations;
        }
        iters += 1;

        loop {
            let accepted = backward_pass(problem, &xs, &us, &lins, reg).and_then(|policy| {
                (0..=LINE_SEARCH_STEPS)
                    .map(|i| 0.5f64.powi(i))
                    .filter_map(|step| forward_pass(problem, &xs, &us, &policy, step))
                    .find(|(_, _, c)| *c < cost)
            });
            match accepted {
                Some((new_xs, new_us, new_cost)) => {
                    let rel = (cost - new_cost) / cost.abs().max(f64::MIN_POSITIVE);
                    xs = new_xs;
                    us = new_us;
                    cost = new_cost;
                    cost_history.push(cost);
                    reg = (reg / 10.0).max(REG_MIN);
                    if rel < STALL_REL_DECREASE {
                        break 'outer Termination::Stalled;
                    }
                    break;
                }
                None => {
                    reg *= 10.0;
                    if reg > REG_MAX {
                        break 'outer Termination::RegularizationCap;
                    }
                }
            }
        }
    };

    let grad_norm = projected_max_norm(problem.model, &us, &cost_gradient(problem, &us)?);
    let converged = match termination {
        Termination::Gradient | Termination::Stalled => true,
        Termination::RegularizationCap => grad_norm <= opts.tol,
        Termination::MaxIterations => false,
    };
    Ok(OcpSolution {
        u_seq: us,
        x_seq: xs,
        cost,
        grad_norm,
        iters,
        converged,
        termination,
        cost_history,
    })
}

/// Re-sizes a control sequence for a new horizon.
///
/// `new_n = len − 1` drops the first control, `new_n = len` keeps the
/// sequence, `new_n = len + 1` appends `κ_f(x_end)`. Shorter targets drop the
/// first control and truncate; longer targets pad with `κ_f` along its own
/// rollout from `x_end`.
pub fn shift_warm_start(
    model: &Model,
    terminal: &TerminalPair,
    u_seq: &[ControlVec],
    new_n: usize,
    x_end: &StateVec,
) -> Result<Vec<ControlVec>> {
    if new_n == 0 {
        return Err(Error::InvalidHorizon(new_n));
    }
    let len = u_seq.len();
    if new_n == len {
        return Ok(u_seq.to_vec());
    }
    if new_n < len {
        return Ok(u_seq[1..=new_n].to_vec());
    }
    let mut out = u_seq.to_vec();
    let mut x = x_end.clone();
    while out.len() < new_n {
        let u = terminal.terminal_feedback(&x);
        if out.len() + 1 < new_n {
            x = model.step_euler(&x, &u)?;
        }
        out.push(u);
    }
    Ok(out)
}
