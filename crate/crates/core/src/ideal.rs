//! Brute-force oracle for the minimal-horizon theory on small gridded
//! systems (n ≤ 2).
//!
//! The discretized transition is `f_d(x, u) = snap(f(x, u))`: successors are
//! snapped to the nearest grid point, and leaving the state box is
//! infeasible. The minimal horizon `N(x)` is computed by breadth-first search,
//! the sets `X_N` by the backward recursion `X_{N+1} = {x : ∃u, f_d(x,u) ∈ X_N}`,
//! and the horizon-`N(x)` problem with terminal constraint `x(N) ∈ X_f` by
//! exhaustive enumeration over the finite control set.

use std::fmt;
use std::sync::Arc;

use nalgebra::{dvector, DMatrix, DVector};

use crate::dynamics::{ControlVec, StateVec};
use crate::error::{ensure_dim, Error, Result};

pub type GridDynamics = Arc<dyn Fn(&StateVec, &ControlVec) -> StateVec + Send + Sync>;

/// Largest number of control sequences [`ideal_trajectory`] will enumerate per step.
pub const ENUMERATION_LIMIT: f64 = 1e7;

#[derive(Clone)]
pub struct GridInstance {
    pub name: &'static str,
    dynamics: GridDynamics,
    controls: Vec<ControlVec>,
    /// `X_f = {x : xᵀPx/2 ≤ level}`.
    terminal_p: DMatrix<f64>,
    terminal_level: f64,
    lower: Vec<f64>,
    spacing: Vec<f64>,
    counts: Vec<usize>,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl fmt::Debug for GridInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridInstance")
            .field("name", &self.name)
            .field("controls", &self.controls.len())
            .field("counts", &self.counts)
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Debug)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &'static str,
        dynamics: GridDynamics,
        controls: Vec<ControlVec>,
        terminal_p: DMatrix<f64>,
        terminal_level: f64,
        grid: GridSpec,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let n = grid.lower.len();
        if !(1..=2).contains(&n) {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: format!("only 1-D and 2-D grids are supported, got {n}-D"),
            });
        }
        ensure_dim("grid spacing", n, grid.spacing.len())?;
        ensure_dim("grid counts", n, grid.counts.len())?;
        ensure_dim("terminal P", n, terminal_p.nrows())?;
        ensure_dim("stage Q", n, q.nrows())?;
        let m = controls.first().map_or(0, |u| u.len());
        ensure_dim("stage R", m, r.nrows())?;
        if !controls.iter().any(|u| u.iter().all(|v| *v == 0.0)) {
            return Err(Error::InvalidParameter {
                name: "controls",
                reason: "control set must contain 0".into(),
            });
        }
        if terminal_level.is_nan() || terminal_level <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "terminal_level",
                reason: "terminal set must contain a neighborhood of 0".into(),
            });
        }
        Ok(Self {
            name,
            dynamics,
            controls,
            terminal_p,
            terminal_level,
            lower: grid.lower,
            spacing: grid.spacing,
            counts: grid.counts,
            q,
            r,
        })
    }

    /// `x⁺ = x + u`, `U = {−1, 0, 1}`, `X_f = [−0.5, 0.5]`, box `[−4, 4]` at spacing 0.25.
    pub fn scalar_integrator() -> Self {
        Self::new(
            "scalar",
            Arc::new(|x: &StateVec, u: &ControlVec| x + u),
            vec![dvector![-1.0], dvector![0.0], dvector![1.0]],
            DMatrix::identity(1, 1),
            0.125,
            GridSpec {
                lower: vec![-4.0],
                spacing: vec![0.25],
                counts: vec![33],
            },
            DMatrix::identity(1, 1),
            DMatrix::identity(1, 1),
        )
        .expect("built-in instance is valid")
    }

    /// Inverted pendulum, Euler step 0.5:
    /// `x⁺ = (x₁ + ½x₂, x₂ + ½(sin x₁ + u))`, `U = {−2, −1.5, …, 2}`,
    /// `X_f = {|x|² ≤ 1}`, box `[−2, 2]²` at spacing 0.25.
    pub fn planar_pendulum() -> Self {
        let controls = (-4..=4).map(|i| dvector![0.5 * i as f64]).collect();
        Self::new(
            "planar-pendulum",
            Arc::new(|x: &StateVec, u: &ControlVec| {
                dvector![x[0] + 0.5 * x[1], x[1] + 0.5 * (x[0].sin() + u[0])]
            }),
            controls,
            DMatrix::identity(2, 2),
            0.5,
            GridSpec {
                lower: vec![-2.0, -2.0],
                spacing: vec![0.25, 0.25],
                counts: vec![17, 17],
            },
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
        )
        .expect("built-in instance is valid")
    }

    pub fn builtin() -> Vec<Self> {
        vec![Self::scalar_integrator(), Self::planar_pendulum()]
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn controls(&self) -> &[ControlVec] {
        &self.controls
    }

    pub fn num_points(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn point(&self, index: usize) -> StateVec {
        let mut rest = index;
        let mut coords = vec![0.0; self.dim()];
        for d in (0..self.dim()).rev() {
            let i = rest % self.counts[d];
            rest /= self.counts[d];
            coords[d] = self.lower[d] + i as f64 * self.spacing[d];
        }
        DVector::from_vec(coords)
    }

    /// Nearest grid index, or `None` outside the state box.
    pub fn snap(&self, x: &StateVec) -> Option<usize> {
        let mut index = 0;
        for d in 0..self.dim() {
            let t = (x[d] - self.lower[d]) / self.spacing[d];
            let last = (self.counts[d] - 1) as f64;
            if !(-1e-9..=last + 1e-9).contains(&t) {
                return None;
            }
            let i = (t.round() as usize).min(self.counts[d] - 1);
            index = index * self.counts[d] + i;
        }
        Some(index)
    }

    pub fn terminal_cost(&self, x: &StateVec) -> f64 {
        0.5 * x.dot(&(&self.terminal_p * x))
    }

    pub fn in_terminal_set(&self, x: &StateVec) -> bool {
        self.terminal_cost(x) <= self.terminal_level
    }

    pub fn stage_cost(&self, x: &StateVec, u: &ControlVec) -> f64 {
        0.5 * (x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
    }

    /// `f_d(x, u)` as a grid index.
    pub fn successor(&self, x: &StateVec, u: &ControlVec) -> Option<usize> {
        self.snap(&(self.dynamics)(x, u))
    }
}

/// Smallest `N ≤ n_cap` for which some control sequence drives `x` into `X_f`.
pub fn min_horizon(instance: &GridInstance, x: &StateVec, n_cap: usize) -> Option<usize> {
    if instance.in_terminal_set(x) {
        return Some(0);
    }
    let mut visited = vec![false; instance.num_points()];
    let mut frontier = Vec::new();
    for u in instance.controls() {
        if let Some(j) = instance.successor(x, u) {
            if !visited[j] {
                visited[j] = true;
                frontier.push(j);
            }
        }
    }
    for depth in 1..=n_cap {
        if frontier
            .iter()
            .any(|&j| instance.in_terminal_set(&instance.point(j)))
        {
            return Some(depth);
        }
        let mut next = Vec::new();
        for &i in &frontier {
            let xi = instance.point(i);
            for u in instance.controls() {
                if let Some(j) = instance.successor(&xi, u) {
                    if !visited[j] {
                        visited[j] = true;
                        next.push(j);
                    }
                }
            }
        }
        frontier = next;
    }
    None
}

/// `N(x)` at every grid point.
pub fn horizon_field(instance: &GridInstance, n_cap: usize) -> Vec<Option<usize>> {
    (0..instance.num_points())
        .map(|i| min_horizon(instance, &instance.point(i), n_cap))
        .collect()
}

/// Grid masks `X_0 … X_{n_cap}`.
pub fn reachable_sets(instance: &GridInstance, n_cap: usize) -> Vec<Vec<bool>> {
    let points: Vec<StateVec> = (0..instance.num_points())
        .map(|i| instance.point(i))
        .collect();
    let successors: Vec<Vec<usize>> = points
        .iter()
        .map(|x| {
            instance
                .controls()
                .iter()
                .filter_map(|u| instance.successor(x, u))
                .collect()
        })
        .collect();
    let mut sets = Vec::with_capacity(n_cap + 1);
    sets.push(
        points
            .iter()
            .map(|x| instance.in_terminal_set(x))
            .collect::<Vec<_>>(),
    );
    for _ in 0..n_cap {
        let prev = sets.last().expect("X_0 present");
        let next = successors
            .iter()
            .map(|succ| succ.iter().any(|&j| prev[j]))
            .collect();
        sets.push(next);
    }
    sets
}

/// First `(N, grid index)` with `x ∈ X_N` but `x ∉ X_{N+1}`.
pub fn nesting_violation(sets: &[Vec<bool>]) -> Option<(usize, usize)> {
    sets.windows(2).enumerate().find_map(|(n, pair)| {
        pair[0]
            .iter()
            .zip(&pair[1])
            .position(|(a, b)| *a && !*b)
            .map(|i| (n, i))
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdealStep {
    pub state: StateVec,
    /// `N(x)`.
    pub horizon: usize,
    /// `V(x) = V⁰_{N(x)}(x)`.
    pub value: f64,
    /// `κ(x)`; `None` once the state is in `X_f`.
    pub control: Option<ControlVec>,
    pub stage_cost: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IdealTrajectory {
    pub steps: Vec<IdealStep>,
}

/// Optimal cost and first control of the horizon-`n` problem with terminal
/// constraint, by exhaustive depth-first enumeration over `Uᵈⁿ` with
/// branch-and-bound on the (nonnegative) running cost.
pub fn optimal_constrained(
    instance: &GridInstance,
    x: &StateVec,
    n: usize,
) -> Result<Option<(f64, Vec<ControlVec>)>> {
    let count = (instance.controls().len() as f64).powi(n as i32);
    if count > ENUMERATION_LIMIT {
        return Err(Error::EnumerationTooLarge {
            count,
            limit: ENUMERATION_LIMIT,
        });
    }
    let mut best: Option<(f64, Vec<ControlVec>)> = None;
    let mut path = Vec::with_capacity(n);
    enumerate(instance, x, n, 0.0, &mut path, &mut best);
    Ok(best)
}

fn enumerate(
    instance: &GridInstance,
    x: &StateVec,
    remaining: usize,
    acc: f64,
    path: &mut Vec<ControlVec>,
    best: &mut Option<(f64, Vec<ControlVec>)>,
) {
    if best.as_ref().is_some_and(|(b, _)| acc >= *b) {
        return;
    }
    if remaining == 0 {
        if instance.in_terminal_set(x) {
            let total = acc + instance.terminal_cost(x);
            if best.as_ref().is_none_or(|(b, _)| total < *b) {
                *best = Some((total, path.clone()));
            }
        }
        return;
    }
    for u in instance.controls() {
        let Some(j) = instance.successor(x, u) else {
            continue;
        };
        path.push(u.clone());
        let next = instance.point(j);
        enumerate(
            instance,
            &next,
            remaining - 1,
            acc + instance.stage_cost(x, u),
            path,
            best,
        );
        path.pop();
    }
}

/// Closed loop under the ideal feedback `κ(x) = κ_{N(x)}(x)` until the state
/// enters `X_f`.
pub fn ideal_trajectory(
    instance: &GridInstance,
    x0: &StateVec,
    n_cap: usize,
) -> Result<IdealTrajectory> {
    ensure_dim("ideal initial state", instance.dim(), x0.len())?;
    let mut x = x0.clone();
    let mut steps = Vec::new();
    for _ in 0..=n_cap + 1 {
        let horizon = min_horizon(instance, &x, n_cap).ok_or_else(|| Error::InvalidParameter {
            name: "x0",
            reason: format!(
                "terminal set unreachable within {n_cap} steps from {}",
                x.transpose()
            ),
        })?;
        if horizon == 0 {
            steps.push(IdealStep {
                value: instance.terminal_cost(&x),
                state: x,
                horizon,
                control: None,
                stage_cost: 0.0,
            });
            return Ok(IdealTrajectory { steps });
        }
        let (value, seq) = optimal_constrained(instance, &x, horizon)?
            .expect("breadth-first search found a feasible sequence of this length");
        let u = seq[0].clone();
        let next = instance
            .successor(&x, &u)
            .map(|j| instance.point(j))
            .expect("optimal sequence stays in the box");
        steps.push(IdealStep {
            stage_cost: instance.stage_cost(&x, &u),
            state: x,
            horizon,
            value,
            control: Some(u),
        });
        x = next;
    }
    unreachable!(
        "the tail of an optimal sequence is feasible, so N(x) drops by at least one per step"
    )
}

/// Roundoff allowance for comparing sums of at most `len` stage costs of size `scale`.
fn roundoff(scale: f64) -> f64 {
    1e-9 * (1.0 + scale.abs())
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteReport {
    pub instance: String,
    pub grid_points: usize,
    pub nested: bool,
    pub agreement_mismatches: usize,
    pub trajectories: usize,
    pub decrement_holds: usize,
    /// Start points whose horizon sequence did not decrement by exactly one.
    pub decrement_exceptions: Vec<StateVec>,
    pub descent_steps: usize,
    pub descent_violations: usize,
    pub worst_descent_margin: f64,
}

impl SuiteReport {
    pub fn decrement_fraction(&self) -> f64 {
        if self.trajectories == 0 {
            1.0
        } else {
            self.decrement_holds as f64 / self.trajectories as f64
        }
    }

    pub fn passed(&self) -> bool {
        self.nested
            && self.agreement_mismatches == 0
            && self.decrement_fraction() >= 0.95
            && self.descent_violations == 0
    }
}

/// Nesting, BFS/recursion agreement, and the decrement and descent properties
/// along ideal trajectories started from every reachable grid point.
pub fn run_property_suite(instance: &GridInstance, n_cap: usize) -> Result<SuiteReport> {
    let sets = reachable_sets(instance, n_cap);
    let field = horizon_field(instance, n_cap);
    let mut report = SuiteReport {
        instance: instance.name.to_string(),
        grid_points: instance.num_points(),
        nested: nesting_violation(&sets).is_none(),
        worst_descent_margin: f64::INFINITY,
        ..Default::default()
    };
    for (i, n_x) in field.iter().enumerate() {
        for (n, set) in sets.iter().enumerate() {
            if set[i] != n_x.is_some_and(|v| v <= n) {
                report.agreement_mismatches += 1;
            }
        }
    }
    for (i, n_x) in field.iter().enumerate() {
        if n_x.is_none_or(|n| n == 0) {
            continue;
        }
        let traj = ideal_trajectory(instance, &instance.point(i), n_cap)?;
        report.trajectories += 1;
        let decrements = traj
            .steps
            .windows(2)
            .all(|w| w[1].horizon + 1 == w[0].horizon);
        if decrements {
            report.decrement_holds += 1;
        } else {
            report
                .decrement_exceptions
                .push(traj.steps[0].state.clone());
        }
        for w in traj.steps.windows(2) {
            report.descent_steps += 1;
            let margin = w[0].value - w[0].stage_cost - w[1].value;
            report.worst_descent_margin = report.worst_descent_margin.min(margin);
            if margin < -roundoff(w[0].value) {
                report.descent_violations += 1;
            }
        }
    }
    Ok(report)
}
