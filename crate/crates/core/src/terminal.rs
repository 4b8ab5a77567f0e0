//! Terminal pair `(V_f, κ_f)` from the infinite-horizon LQR of the linearized
//! dynamics, plus the quadratic class-K bound `α(|x|) = c·|x|²`.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{ControlBounds, ControlVec, Model, StateVec};
use crate::error::{ensure_dim, Error, Result};

/// Stage cost `l(x, u) = (xᵀQx + uᵀRu)/2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadLagrangian {
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl QuadLagrangian {
    pub fn new(q: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        check_symmetric("Q", &q)?;
        check_symmetric("R", &r)?;
        let min_q = q.clone().symmetric_eigenvalues().min();
        if min_q < -1e-12 * q.amax().max(1.0) {
            return Err(Error::InvalidParameter {
                name: "Q",
                reason: format!("must be positive semidefinite (min eigenvalue {min_q})"),
            });
        }
        if r.clone().cholesky().is_none() {
            return Err(Error::InvalidParameter {
                name: "R",
                reason: "must be positive definite".into(),
            });
        }
        Ok(Self { q, r })
    }

    /// `Q = q_scale·I`, `R = r_scale·I`.
    pub fn scaled_identity(n: usize, m: usize, q_scale: f64, r_scale: f64) -> Result<Self> {
        Self::new(
            DMatrix::identity(n, n) * q_scale,
            DMatrix::identity(m, m) * r_scale,
        )
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn stage_cost(&self, x: &StateVec, u: &ControlVec) -> f64 {
        0.5 * (x.dot(&(&self.q * x)) + u.dot(&(&self.r * u)))
    }

    /// Scales Q and R by the same factor.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.q * factor, &self.r * factor)
    }
}

fn check_symmetric(name: &'static str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidParameter {
            name,
            reason: format!("must be square, got {}x{}", m.nrows(), m.ncols()),
        });
    }
    if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(Error::InvalidParameter {
            name,
            reason: "must be symmetric".into(),
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DareOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub iterations: usize,
    /// Frobenius norm of `P − Ric(P)`.
    pub residual: f64,
}

/// One application of the Riccati map
/// `Ric(P) = Q + AᵀPA − AᵀPB(R + BᵀPB)⁻¹BᵀPA`, returned with the gain `(R + BᵀPB)⁻¹BᵀPA`.
pub fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pb = p * b;
    let gram = r + b.transpose() * &pb;
    let rhs = pb.transpose() * a;
    let k = gram
        .lu()
        .solve(&rhs)
        .ok_or(Error::SingularMatrix("R + BᵀPB"))?;
    let next = q + a.transpose() * p * a - rhs.transpose() * &k;
    Ok(((&next + next.transpose()) * 0.5, k))
}

/// Fixed-point iteration of the Riccati map from `P₀ = Q` until
/// `‖P − Ric(P)‖_F ≤ tol`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<DareSolution> {
    let n = a.nrows();
    ensure_dim("DARE A columns", n, a.ncols())?;
    ensure_dim("DARE B rows", n, b.nrows())?;
    ensure_dim("DARE Q", n, q.nrows())?;
    ensure_dim("DARE R", b.ncols(), r.nrows())?;

    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for iterations in 0..opts.max_iter {
        let (next, k) = riccati_step(a, b, q, r, &p)?;
        residual = (&next - &p).norm();
        if !residual.is_finite() {
            break;
        }
        if residual <= opts.tol {
            return Ok(DareSolution {
                p,
                k,
                iterations,
                residual,
            });
        }
        p = next;
    }
    Err(Error::DareNoConvergence {
        iterations: opts.max_iter,
        residual,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct TerminalPair {
    p: DMatrix<f64>,
    k: DMatrix<f64>,
    alpha_coeff: f64,
    bounds: Option<ControlBounds>,
}

impl TerminalPair {
    pub fn new(
        p: DMatrix<f64>,
        k: DMatrix<f64>,
        alpha_coeff: f64,
        bounds: Option<ControlBounds>,
    ) -> Result<Self> {
        check_symmetric("P", &p)?;
        ensure_dim("terminal gain columns", p.nrows(), k.ncols())?;
        if let Some(b) = &bounds {
            ensure_dim("terminal gain rows", b.lower().len(), k.nrows())?;
        }
        if !(alpha_coeff.is_finite() && alpha_coeff > 0.0) {
            return Err(Error::InvalidParameter {
                name: "alpha_coeff",
                reason: format!("must be positive, got {alpha_coeff}"),
            });
        }
        Ok(Self {
            p,
            k,
            alpha_coeff,
            bounds,
        })
    }

    /// LQR terminal pair from the linearization of `model` at the origin.
    /// Fails if the closed loop `A − BK` is not Schur stable.
    pub fn lqr(model: &Model, lagrangian: &QuadLagrangian, alpha_coeff: f64) -> Result<Self> {
        Self::lqr_with(model, lagrangian, alpha_coeff, DareOptions::default())
    }

    pub fn lqr_with(
        model: &Model,
        lagrangian: &QuadLagrangian,
        alpha_coeff: f64,
        opts: DareOptions,
    ) -> Result<Self> {
        ensure_dim("lagrangian Q", model.n(), lagrangian.q().nrows())?;
        ensure_dim("lagrangian R", model.m(), lagrangian.r().nrows())?;
        let lin = model.linearize(&DVector::zeros(model.n()), &DVector::zeros(model.m()))?;
        let sol = solve_dare(&lin.a, &lin.b, lagrangian.q(), lagrangian.r(), opts)?;
        let rho = spectral_radius(&(&lin.a - &lin.b * &sol.k));
        if rho >= 1.0 {
            return Err(Error::InvalidParameter {
                name: "terminal gain",
                reason: format!("closed-loop spectral radius {rho} is not below 1"),
            });
        }
        Self::new(sol.p, sol.k, alpha_coeff, model.bounds().cloned())
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn alpha_coeff(&self) -> f64 {
        self.alpha_coeff
    }

    /// `V_f(x) = xᵀPx/2`.
    pub fn terminal_cost(&self, x: &StateVec) -> f64 {
        0.5 * x.dot(&(&self.p * x))
    }

    pub fn terminal_cost_gradient(&self, x: &StateVec) -> StateVec {
        &self.p * x
    }

    /// `κ_f(x) = −Kx`, clamped into the control box when one is configured.
    pub fn terminal_feedback(&self, x: &StateVec) -> ControlVec {
        let u = -(&self.k * x);
        match &self.bounds {
            Some(b) => b.clamp(&u),
            None => u,
        }
    }

    /// `α(|x|) = c·|x|²`.
    pub fn alpha_bound(&self, x: &StateVec) -> f64 {
        self.alpha_coeff * x.norm_squared()
    }
}
