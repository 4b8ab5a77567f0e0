mod common;

use ahmpc::dynamics::{
    pendulum_vector_field, ControlVec, DoublePendulum, Model, PendulumParams, StateVec,
};
use nalgebra::dvector;
use proptest::prelude::*;

use common::*;

fn params() -> PendulumParams {
    PendulumParams::default()
}

#[test]
fn every_model_rests_at_the_origin() {
    use ahmpc::dynamics::{DoubleIntegrator, ScalarIntegrator};
    let models = [
        Model::new(DoublePendulum::new(params()).unwrap(), 0.1).unwrap(),
        Model::new(DoubleIntegrator, 0.1).unwrap(),
        Model::new(ScalarIntegrator, 0.1).unwrap(),
    ];
    for model in models {
        let next = model
            .step_euler(&StateVec::zeros(model.n()), &ControlVec::zeros(model.m()))
            .unwrap();
        assert!(next.iter().all(|v| *v == 0.0));
    }
}

#[test]
fn matches_euler_lagrange_oracle() {
    let p = params();
    let mut rng = rng(11);
    for _ in 0..50 {
        let x = uniform_vec(&mut rng, 4, 3.0);
        let u = uniform_vec(&mut rng, 2, 20.0);
        let rate = pendulum_vector_field(&p, &x, &u).unwrap();
        let oracle = euler_lagrange_accel(&p, &x, &u);
        for i in 0..2 {
            let err = (rate[2 + i] - oracle[i]).abs();
            assert!(
                err <= 1e-5 * (1.0 + oracle[i].abs()),
                "x={x} i={i} {} vs {}",
                rate[2 + i],
                oracle[i]
            );
        }
        assert_eq!((rate[0], rate[1]), (x[2], x[3]));
    }
}

#[test]
fn frozen_accelerations() {
    let x = dvector![0.1, -0.1, 0.2, 0.3];
    let u = dvector![1.0, -1.0];
    let rate = pendulum_vector_field(&params(), &x, &u).unwrap();
    let oracle = euler_lagrange_accel(&params(), &x, &u);
    let frozen = [FROZEN_ACC1, FROZEN_ACC2];
    for i in 0..2 {
        assert!((rate[2 + i] - frozen[i]).abs() < 1e-12, "{}", rate[2 + i]);
        assert!((oracle[i] - frozen[i]).abs() < 1e-6);
    }
}

const FROZEN_ACC1: f64 = 3.110821510270534;
const FROZEN_ACC2: f64 = -2.2601156179596735;

#[test]
fn rk4_conserves_energy() {
    for x0 in [
        dvector![
            std::f64::consts::FRAC_PI_2,
            -std::f64::consts::FRAC_PI_2,
            0.0,
            0.0
        ],
        dvector![0.3, -0.2, 0.5, -0.4],
        dvector![2.5, 1.0, -1.0, 2.0],
    ] {
        let drift = energy_drift(&params(), x0.clone());
        assert!(drift < 1e-6, "x0={x0} drift={drift:e}");
    }
}

#[test]
fn power_balance() {
    let p = params();
    let mut rng = rng(12);
    for _ in 0..100 {
        let x = uniform_vec(&mut rng, 4, 3.0);
        let u = uniform_vec(&mut rng, 2, 20.0);
        let rate = pendulum_vector_field(&p, &x, &u).unwrap();
        let (residual, scale) = power_residual(&p, &x, &u, &rate);
        assert!(
            residual.abs() <= 1e-8 * (1.0 + scale),
            "x={x} residual={residual:e}"
        );
    }
}

#[test]
fn power_balance_detects_a_wrong_torque_map() {
    let p = params();
    let x = dvector![0.3, -0.4, 1.0, -2.0];
    let u = dvector![2.0, 1.0];
    let rate = pendulum_vector_field(&p, &x, &u).unwrap();
    // swapping the inputs must break the identity, otherwise the check is vacuous
    let (residual, scale) = power_residual(&p, &x, &dvector![u[1], u[0]], &rate);
    assert!(residual.abs() > 1e-3 * (1.0 + scale));
}

#[test]
fn upright_linearization_matches_small_angle_model() {
    let p = params();
    let dt = 0.1;
    let model = Model::new(DoublePendulum::new(p).unwrap(), dt).unwrap();
    let (a_cont, b_cont) = upright_linearization(&p);
    let (a, b) = linear_model_matrices(&model);
    let a_expected = nalgebra::DMatrix::identity(4, 4) + a_cont * dt;
    let b_expected = b_cont * dt;
    assert!((a - a_expected).amax() < 1e-6);
    assert!((b - b_expected).amax() < 1e-6);
}

#[test]
fn jacobians_consistent_with_a_coarser_difference() {
    let model = Model::new(DoublePendulum::new(params()).unwrap(), 0.1).unwrap();
    let mut rng = rng(13);
    for _ in 0..20 {
        let x = uniform_vec(&mut rng, 4, 2.0);
        let u = uniform_vec(&mut rng, 2, 10.0);
        let lin = model.linearize(&x, &u).unwrap();
        // forward-Euler map differentiated with a 4-point stencil
        let h = 1e-3;
        let step = |x: &StateVec, u: &ControlVec| model.step_euler(x, u).unwrap();
        for j in 0..6 {
            let shift = |s: f64| {
                let (mut xs, mut us) = (x.clone(), u.clone());
                if j < 4 {
                    xs[j] += s;
                } else {
                    us[j - 4] += s;
                }
                step(&xs, &us)
            };
            let col =
                (shift(-2.0 * h) - shift(2.0 * h) + (shift(h) - shift(-h)) * 8.0) / (12.0 * h);
            let got = if j < 4 {
                lin.a.column(j).into_owned()
            } else {
                lin.b.column(j - 4).into_owned()
            };
            let err = (&got - &col).amax();
            assert!(err <= 1e-5 * (1.0 + col.amax()), "column {j}: {err:e}");
        }
    }
}

proptest! {
    #[test]
    fn vector_field_is_odd(
        x in proptest::collection::vec(-4.0f64..4.0, 4),
        u in proptest::collection::vec(-30.0f64..30.0, 2),
    ) {
        let x = StateVec::from_vec(x);
        let u = ControlVec::from_vec(u);
        let p = params();
        let plus = pendulum_vector_field(&p, &x, &u).unwrap();
        let minus = pendulum_vector_field(&p, &(-&x), &(-&u)).unwrap();
        prop_assert!((plus + minus).amax() <= 1e-12);
    }

    #[test]
    fn energy_is_even(x in proptest::collection::vec(-4.0f64..4.0, 4)) {
        let x = StateVec::from_vec(x);
        let p = params();
        prop_assert!((p.energy(&x) - p.energy(&(-&x))).abs() <= 1e-12 * p.energy(&x).abs().max(1.0));
    }
}
