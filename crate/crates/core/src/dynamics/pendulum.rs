//! Planar double pendulum with massless legs and point masses, actuated at
//! both pivots. Angles are absolute, measured counter-clockwise from upright.

use nalgebra::{dvector, Vector2};

use super::{ControlVec, StateVec, VectorField};
use crate::error::{ensure_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumParams {
    /// Base-to-joint length (m).
    pub l1: f64,
    /// Joint-to-tip length (m).
    pub l2: f64,
    /// Point mass at the joint (kg).
    pub m1: f64,
    /// Point mass at the tip (kg).
    pub m2: f64,
    /// Gravitational acceleration (m/s²).
    pub g: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 2.0,
            m1: 2.0,
            m2: 1.0,
            g: 9.81,
        }
    }
}

impl PendulumParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("l1", self.l1),
            ("l2", self.l2),
            ("m1", self.m1),
            ("m2", self.m2),
            ("g", self.g),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {value}"),
                });
            }
        }
        Ok(())
    }

    /// Kinetic plus gravitational potential energy, evaluated from the
    /// Cartesian positions and velocities of the two point masses.
    pub fn energy(&self, x: &StateVec) -> f64 {
        let (q1, q2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let joint_vel = Vector2::new(-q1.cos(), -q1.sin()) * (self.l1 * w1);
        let tip_vel = joint_vel + Vector2::new(-q2.cos(), -q2.sin()) * (self.l2 * w2);
        let joint_height = self.l1 * q1.cos();
        let tip_height = joint_height + self.l2 * q2.cos();
        0.5 * self.m1 * joint_vel.norm_squared()
            + 0.5 * self.m2 * tip_vel.norm_squared()
            + self.g * (self.m1 * joint_height + self.m2 * tip_height)
    }
}

/// `(q̇₁, q̇₂, q̈₁, q̈₂)` from `M(q)·q̈ = τ − C(q, q̇)·q̇ − ∂V/∂q` with generalized
/// torques `τ = (u₁ − u₂, u₂)`: the base torque drives leg 1 and the joint
/// torque acts equal-and-opposite between the legs.
pub fn pendulum_vector_field(p: &PendulumParams, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
    ensure_dim("pendulum state", 4, x.len())?;
    ensure_dim("pendulum control", 2, u.len())?;
    let (q1, q2, w1, w2) = (x[0], x[1], x[2], x[3]);
    let (s, c) = (q1 - q2).sin_cos();
    let coupling = p.m2 * p.l1 * p.l2;

    let m11 = (p.m1 + p.m2) * p.l1 * p.l1;
    let m12 = coupling * c;
    let m22 = p.m2 * p.l2 * p.l2;
    let det = m11 * m22 - m12 * m12;
    if det.abs() < 1e-12 {
        return Err(Error::SingularMassMatrix { det });
    }

    let rhs1 = (u[0] - u[1]) - coupling * s * w2 * w2 + (p.m1 + p.m2) * p.g * p.l1 * q1.sin();
    let rhs2 = u[1] + coupling * s * w1 * w1 + p.m2 * p.g * p.l2 * q2.sin();

    let acc1 = (m22 * rhs1 - m12 * rhs2) / det;
    let acc2 = (m11 * rhs2 - m12 * rhs1) / det;
    let rate = dvector![w1, w2, acc1, acc2];
    super::check_finite("pendulum vector field", &rate)?;
    Ok(rate)
}

#[derive(Clone, Copy, Debug)]
pub struct DoublePendulum {
    params: PendulumParams,
}

impl DoublePendulum {
    pub fn new(params: PendulumParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }
}

impl VectorField for DoublePendulum {
    fn state_dim(&self) -> usize {
        4
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn eval(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        pendulum_vector_field(&self.params, x, u)
    }
}
