mod common;

use common::{random_coeffs, rng};
use mpctune_core::narx::{
    fit_least_squares, predict_one_step, simulate_horizon, simulate_horizon_with, NarxCoeffs, NarxSample,
    ScalingSpec, PREDICTION_CLAMP,
};
use rand::Rng;

/// The basis written out term by term.
fn oracle_step(c: &NarxCoeffs, y: [f64; 2], u: f64) -> [f64; 2] {
    let row = |r: &[f64; 7]| r[0] + r[1] * y[0] + r[2] * y[1] + r[3] * u + r[4] * y[0] * y[0] + r[5] * y[1] * y[1] + r[6] * u * u;
    [row(&c.rows[0]), row(&c.rows[1])]
}

#[test]
fn prediction_is_quadratic_in_the_input() {
    let mut r = rng(2);
    for _ in 0..50 {
        let c = random_coeffs(&mut r);
        let y = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let (u, h) = (r.random_range(-1.0..1.0), 0.1);
        let p = |u: f64| predict_one_step(&c, y, u);
        for o in 0..2 {
            let second = p(u + h)[o] - 2.0 * p(u)[o] + p(u - h)[o];
            assert!((second - 2.0 * c.rows[o][6] * h * h).abs() < 1e-12);
        }
    }
}

#[test]
fn one_step_matches_term_by_term_oracle() {
    let mut r = rng(3);
    for _ in 0..200 {
        let c = random_coeffs(&mut r);
        let y = [r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let u = r.random_range(-2.0..2.0);
        let (a, b) = (predict_one_step(&c, y, u), oracle_step(&c, y, u));
        for o in 0..2 {
            assert!((a[o] - b[o]).abs() <= 1e-12 * (1.0 + b[o].abs()));
        }
    }
}

#[test]
fn clamp_is_invisible_inside_the_band_and_binding_outside() {
    let mut r = rng(5);
    for _ in 0..100 {
        let c = random_coeffs(&mut r);
        let y0 = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
        let u: Vec<f64> = (0..10).map(|_| r.random()).collect();
        let raw = simulate_horizon_with(&c, y0, &u, false);
        let clamped = simulate_horizon(&c, y0, &u);
        let escaped = raw.iter().position(|y| y.iter().any(|v| !(v.abs() <= PREDICTION_CLAMP)));
        match escaped {
            None => assert_eq!(raw, clamped),
            Some(k) => {
                assert_eq!(raw[..k], clamped[..k]);
                assert!(clamped.iter().flatten().all(|v| v.abs() <= PREDICTION_CLAMP));
            }
        }
    }
}

#[test]
fn least_squares_recovers_generating_model() {
    let mut r = rng(7);
    let truth = random_coeffs(&mut r);
    let data: Vec<NarxSample> = (0..200)
        .map(|_| {
            let y = [r.random_range(0.0..1.0), r.random_range(0.0..1.0)];
            let u = r.random_range(0.0..1.0);
            NarxSample {
                y,
                u,
                y_next: oracle_step(&truth, y, u),
            }
        })
        .collect();
    let (fit, report) = fit_least_squares(&data).unwrap();
    assert!(!report.ridge);
    for (a, b) in fit.to_vec().iter().zip(truth.to_vec()) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
    assert!(report.train_accuracy.iter().all(|a| *a > 1.0 - 1e-8));
}

#[test]
fn constant_input_falls_back_to_ridge() {
    let mut r = rng(8);
    let data: Vec<NarxSample> = (0..50)
        .map(|_| NarxSample {
            y: [r.random(), r.random()],
            u: 0.5,
            y_next: [r.random(), r.random()],
        })
        .collect();
    let (c, report) = fit_least_squares(&data).unwrap();
    assert!(report.ridge);
    assert!(c.to_vec().iter().all(|v| v.is_finite()));
}

#[test]
fn scaling_roundtrips() {
    let s = ScalingSpec::default();
    let mut r = rng(9);
    for _ in 0..1000 {
        let y = [r.random_range(-1.0..3.0), r.random_range(50.0..200.0)];
        let f = r.random_range(0.0..40.0);
        let back = s.unscale_output(s.scale_output(y));
        assert!((back[0] - y[0]).abs() < 1e-12 && (back[1] - y[1]).abs() < 1e-11);
        assert!((s.unscale_input(s.scale_input(f)) - f).abs() < 1e-12);
    }
    assert_eq!(s.scale_output([0.0, 100.0]), [0.0, 0.0]);
    assert_eq!(s.scale_output([2.0, 150.0]), [1.0, 1.0]);
    assert_eq!(s.scale_input(35.0), 1.0);
}
