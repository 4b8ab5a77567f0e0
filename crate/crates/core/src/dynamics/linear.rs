use nalgebra::{dvector, DMatrix};

use super::{ControlVec, StateVec, VectorField};
use crate::error::Result;

/// `ẋ₁ = x₂, ẋ₂ = u`.
#[derive(Clone, Copy, Debug, Default)]
pub struct DoubleIntegrator;

impl VectorField for DoubleIntegrator {
    fn state_dim(&self) -> usize {
        2
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        Ok(dvector![x[1], u[0]])
    }

    fn jacobians(&self, _x: &StateVec, _u: &ControlVec) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        ))
    }
}

/// `ẋ = u`; with `dt = 1` the step map is `x⁺ = x + u`.
#[derive(Clone, Copy, Debug, Default)]
pub struct ScalarIntegrator;

impl VectorField for ScalarIntegrator {
    fn state_dim(&self) -> usize {
        1
    }

    fn control_dim(&self) -> usize {
        1
    }

    fn eval(&self, _x: &StateVec, u: &ControlVec) -> Result<StateVec> {
        Ok(dvector![u[0]])
    }

    fn jacobians(&self, _x: &StateVec, _u: &ControlVec) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
        Some((DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)))
    }
}
