//! Controlled dynamics `x⁺ = f(x, u)` obtained by Euler discretization of a
//! continuous-time vector field with zero-order-hold control.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_dim, Error, Result};

mod linear;
mod pendulum;

pub use linear::{DoubleIntegrator, ScalarIntegrator};
pub use pendulum::{pendulum_vector_field, DoublePendulum, PendulumParams};

pub type StateVec = DVector<f64>;
pub type ControlVec = DVector<f64>;

/// Continuous-time right-hand side `ẋ = F(x, u)` with the operating point at the origin.
pub trait VectorField: Send + Sync + fmt::Debug {
    fn state_dim(&self) -> usize;

    fn control_dim(&self) -> usize;

    fn eval(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec>;

    /// Closed-form `(∂F/∂x, ∂F/∂u)`. Models without one fall back to finite differences.
    fn jacobians(&self, _x: &StateVec, _u: &ControlVec) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        None
    }
}

/// Per-entry box `lower ≤ u ≤ upper`.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlBounds {
    lower: ControlVec,
    upper: ControlVec,
}

impl ControlBounds {
    pub fn new(lower: ControlVec, upper: ControlVec) -> Result<Self> {
        ensure_dim("control bounds", lower.len(), upper.len())?;
        for (i, (lo, hi)) in lower.iter().zip(upper.iter()).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidParameter {
                    name: "control_bounds",
                    reason: format!("entry {i}: [{lo}, {hi}] is empty"),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Symmetric box `[-limit, limit]` on every entry.
    pub fn symmetric(m: usize, limit: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(m, -limit),
            DVector::from_element(m, limit),
        )
    }

    pub fn lower(&self) -> &ControlVec {
        &self.lower
    }

    pub fn upper(&self) -> &ControlVec {
        &self.upper
    }

    pub fn clamp(&self, u: &ControlVec) -> ControlVec {
        DVector::from_iterator(
            u.len(),
            u.iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi)),
        )
    }

    /// True when entry `i` sits on a bound.
    pub fn is_active(&self, u: &ControlVec, i: usize) -> bool {
        u[i] <= self.lower[i] || u[i] >= self.upper[i]
    }
}

/// Discrete-time Jacobians of the Euler step map.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearizedModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct Model {
    field: Arc<dyn VectorField>,
    dt: f64,
    bounds: Option<ControlBounds>,
}

impl Model {
    /// Wraps a vector field with an Euler time step. Rejects `dt ≤ 0` and fields
    /// whose origin is not an equilibrium.
    pub fn new(field: impl VectorField + 'static, dt: f64) -> Result<Self> {
        Self::from_arc(Arc::new(field), dt)
    }

    pub fn from_arc(field: Arc<dyn VectorField>, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("time step must be positive and finite, got {dt}"),
            });
        }
        let n = field.state_dim();
        let m = field.control_dim();
        let rate = field.eval(&DVector::zeros(n), &DVector::zeros(m))?;
        if let Some(i) = rate.iter().position(|v| *v != 0.0) {
            return Err(Error::InvalidParameter {
                name: "vector_field",
                reason: format!("origin is not an equilibrium (entry {i} = {})", rate[i]),
            });
        }
        Ok(Self {
            field,
            dt,
            bounds: None,
        })
    }

    pub fn with_bounds(mut self, bounds: ControlBounds) -> Result<Self> {
        ensure_dim("control bounds", self.m(), bounds.lower.len())?;
        self.bounds = Some(bounds);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.field.state_dim()
    }

    pub fn m(&self) -> usize {
        self.field.control_dim()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn bounds(&self) -> Option<&ControlBounds> {
        self.bounds.as_ref()
    }

    pub fn field(&self) -> &dyn VectorField {
        self.field.as_ref()
    }

    /// Clamps `u` into the control box, if one is configured.
    pub fn clamp(&self, u: ControlVec) -> ControlVec {
        match &self.bounds {
            Some(b) => b.clamp(&u),
            None => u,
        }
    }

    pub fn vector_field(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        ensure_dim("state", self.n(), x.len())?;
        ensure_dim("control", self.m(), u.len())?;
        self.field.eval(x, u)
    }

    /// One Euler step `x + dt·F(x, u)` with `u` held constant over the step.
    pub fn step_euler(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        let rate = self.vector_field(x, u)?;
        let next = x + rate * self.dt;
        check_finite("Euler step", &next)?;
        Ok(next)
    }

    /// Jacobians of the Euler step at `(x, u)`: `A = I + dt·∂F/∂x`, `B = dt·∂F/∂u`.
    pub fn linearize(&self, x: &StateVec, u: &ControlVec) -> Result<LinearizedModel> {
        ensure_dim("state", self.n(), x.len())?;
        ensure_dim("control", self.m(), u.len())?;
        let (jx, ju) = match self.field.jacobians(x, u) {
            Some(j) => j,
            None => self.finite_difference_jacobians(x, u)?,
        };
        let a = DMatrix::identity(self.n(), self.n()) + jx * self.dt;
        let b = ju * self.dt;
        check_jacobian("A", &a)?;
        check_jacobian("B", &b)?;
        Ok(LinearizedModel { a, b })
    }

    /// Central differences of the vector field with step `max(1e-6, 1e-6·|coord|)`.
    pub fn finite_difference_jacobians(
        &self,
        x: &StateVec,
        u: &ControlVec,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n();
        let m = self.m();
        let mut jx = DMatrix::zeros(n, n);
        let mut ju = DMatrix::zeros(n, m);
        for j in 0..n {
            let h = fd_step(x[j]);
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (self.field.eval(&xp, u)? - self.field.eval(&xm, u)?) / (xp[j] - xm[j]);
            jx.set_column(j, &col);
        }
        for j in 0..m {
            let h = fd_step(u[j]);
            let mut up = u.clone();
            let mut um = u.clone();
            up[j] += h;
            um[j] -= h;
            let col = (self.field.eval(x, &up)? - self.field.eval(x, &um)?) / (up[j] - um[j]);
            ju.set_column(j, &col);
        }
        Ok((jx, ju))
    }
}

pub(crate) fn fd_step(coord: f64) -> f64 {
    f64::max(1e-6, 1e-6 * coord.abs())
}

pub(crate) fn check_finite(context: &'static str, v: &DVector<f64>) -> Result<()> {
    match v.iter().position(|e| !e.is_finite()) {
        Some(entry) => Err(Error::NonFinite {
            context,
            entry,
            value: v[entry],
        }),
        None => Ok(()),
    }
}

fn check_jacobian(matrix: &'static str, m: &DMatrix<f64>) -> Result<()> {
    for col in 0..m.ncols() {
        for row in 0..m.nrows() {
            if !m[(row, col)].is_finite() {
                return Err(Error::JacobianNonFinite { matrix, row, col });
            }
        }
    }
    Ok(())
}
