mod common;

use common::{loglog_slope, rng, REFERENCE_F, REFERENCE_TRAJECTORY};
use mpctune_core::plant::{measure, step, NoiseSpec, PlantParams, PlantState};
use rand::Rng;

const DT: f64 = 0.005;

/// Largest relative error against the reference checkpoints.
fn reference_error(substeps: usize) -> f64 {
    let p = PlantParams::benchmark(5.1);
    let mut s = PlantState::INITIAL;
    let mut worst = 0.0f64;
    let mut k = 0;
    for (at, expected) in REFERENCE_TRAJECTORY {
        while k < at {
            s = step(&s, REFERENCE_F, DT, substeps, &p).unwrap();
            k += 1;
        }
        for (got, want) in [s.cA, s.cB, s.TR, s.TK].iter().zip(expected) {
            worst = worst.max(((got - want) / want).abs());
        }
    }
    worst
}

#[test]
fn default_integrator_tracks_high_order_reference() {
    let e = reference_error(10);
    assert!(e < 1e-5, "relative error {e:e}");
}

#[test]
fn integrator_is_fourth_order() {
    let subs = [5usize, 10, 20];
    let h: Vec<f64> = subs.iter().map(|n| DT / *n as f64).collect();
    let err: Vec<f64> = subs.iter().map(|n| reference_error(*n)).collect();
    let slope = loglog_slope(&h, &err);
    assert!((3.5..=4.5).contains(&slope), "slope {slope} from {err:?}");
}

#[test]
fn state_stays_physical_under_random_feeds() {
    let p = PlantParams::benchmark(5.1);
    let mut r = rng(31);
    for _ in 0..20 {
        let mut s = PlantState::INITIAL;
        let mut f = 20.0;
        for k in 0..200 {
            if k % 10 == 0 {
                f = r.random_range(5.0..=35.0);
            }
            s = step(&s, f, DT, 10, &p).unwrap();
            assert!(s.cA >= 0.0 && s.cB >= 0.0, "{s:?}");
            assert!((50.0..=200.0).contains(&s.TR), "{s:?}");
        }
    }
}

#[test]
fn stepping_is_deterministic() {
    let p = PlantParams::benchmark(5.1);
    let run = || {
        let mut s = PlantState::INITIAL;
        for k in 0..50 {
            s = step(&s, 5.0 + (k % 7) as f64 * 4.0, DT, 10, &p).unwrap();
        }
        s
    };
    let (a, b) = (run(), run());
    assert_eq!(a.TR.to_bits(), b.TR.to_bits());
    assert_eq!(a.cB.to_bits(), b.cB.to_bits());
}

#[test]
fn measurement_noise_has_requested_moments() {
    let s = PlantState::INITIAL;
    let noise = NoiseSpec::new(0.05, 0.5).unwrap();
    let mut r = rng(77);
    let n = 200_000;
    let (mut sb, mut sb2, mut sr, mut sr2) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..n {
        let (b, t) = measure(&s, &noise, &mut r);
        let (eb, et) = (b - s.cB, t - s.TR);
        sb += eb;
        sb2 += eb * eb;
        sr += et;
        sr2 += et * et;
    }
    let n = n as f64;
    // means within 4 standard errors, standard deviations within 1%
    assert!((sb / n).abs() < 4.0 * 0.05 / n.sqrt());
    assert!((sr / n).abs() < 4.0 * 0.5 / n.sqrt());
    assert!(((sb2 / n).sqrt() / 0.05 - 1.0).abs() < 0.01);
    assert!(((sr2 / n).sqrt() / 0.5 - 1.0).abs() < 0.01);
    assert_eq!(measure(&s, &NoiseSpec::NONE, &mut r), (s.cB, s.TR));
}
