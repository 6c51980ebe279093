mod common;

use mpctune_core::harness::{
    baseline_openloop_id, evaluate, generate_prbs_dataset, monte_carlo_assess, prbs_input, run_closed_loop,
    replicate_stream, BaselineConfig, HarnessConfig, TuningParams,
};
use mpctune_core::plant::NoiseSpec;
use mpctune_core::rng::{stream, stream_id, Purpose};

fn noisy() -> NoiseSpec {
    NoiseSpec::new(0.2, 10.0).unwrap()
}

/// Open-loop identified coefficients: a controller that reacts to noise.
fn identified(config: &HarnessConfig) -> TuningParams {
    baseline_openloop_id(config, &BaselineConfig::default(), &NoiseSpec::NONE, 0).unwrap().theta
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn single_and_averaged_replicates_estimate_the_same_mean() {
    let config = HarnessConfig::benchmark(5.1);
    let theta = identified(&config);
    let ones: Vec<f64> = (0..50).map(|i| evaluate(&theta, 1, &config, &noisy(), 1, i).unwrap().y_obj).collect();
    let fives: Vec<f64> = (0..10).map(|i| evaluate(&theta, 5, &config, &noisy(), 2, i).unwrap().y_obj).collect();
    let (m1, s1) = mean_sd(&ones);
    let (m5, s5) = mean_sd(&fives);
    let se = (s1 * s1 / 50.0 + s5 * s5 / 10.0).sqrt();
    assert!(s1 > 0.0);
    assert!((m1 - m5).abs() <= 3.0 * se, "{m1} vs {m5} (se {se})");
}

#[test]
fn assessments_with_different_seeds_agree() {
    let config = HarnessConfig::benchmark(5.1);
    let theta = identified(&config);
    let (a, _) = monte_carlo_assess(&theta, 100, &config, &noisy(), 11).unwrap();
    let (b, _) = monte_carlo_assess(&theta, 100, &config, &noisy(), 12).unwrap();
    let band = 3.0 * a.production_stats.std / 10.0;
    assert!((a.production_stats.mean - b.production_stats.mean).abs() <= band, "{a:?}\n{b:?}");
    assert!(a.per_step_violation_freq.iter().all(|f| (0.0..=1.0).contains(f)));
    assert_eq!(a.per_step_violation_freq.len(), 40);
}

#[test]
fn noise_free_assessment_has_no_spread() {
    let config = HarnessConfig::benchmark(5.1);
    let theta = identified(&config);
    let (r, runs) = monte_carlo_assess(&theta, 10, &config, &NoiseSpec::NONE, 3).unwrap();
    assert_eq!(r.production_stats.std, 0.0);
    assert_eq!(r.production_stats.min, r.production_stats.max);
    assert!(runs.windows(2).all(|w| w[0] == w[1]));
    let e1 = evaluate(&theta, 1, &config, &NoiseSpec::NONE, 0, 0).unwrap();
    let e2 = evaluate(&theta, 1, &config, &NoiseSpec::NONE, 7, 9).unwrap();
    assert_eq!(e1, e2);
}

#[test]
fn prbs_dataset_shape_and_reproducibility() {
    let config = HarnessConfig::benchmark(5.1);
    let gen = |seed| generate_prbs_dataset(3000, 100, &config, &noisy(), &mut stream(seed, stream_id(Purpose::Prbs, 0, 0))).unwrap();
    let a = gen(4);
    assert_eq!(a.len(), 3000);
    assert_eq!(a, gen(4));
    assert_ne!(a, gen(5));
    let inputs: Vec<f64> = a.iter().map(|r| prbs_input(r, &config)).collect();
    assert!(inputs.iter().all(|f| (*f - 5.0).abs() < 1e-12 || (*f - 35.0).abs() < 1e-12));
    for hold in inputs.chunks(100) {
        assert!(hold.iter().all(|f| *f == hold[0]));
    }
    // consecutive rows chain: y_{k+1} of one row is y of the next
    assert!(a.windows(2).all(|w| w[0].y_next == w[1].y));
}

#[test]
fn baseline_has_zero_backoff_and_accurate_noise_free_fit() {
    let config = HarnessConfig::benchmark(5.1);
    let b = baseline_openloop_id(&config, &BaselineConfig::default(), &NoiseSpec::NONE, 0).unwrap();
    assert_eq!(b.theta.backoff, 0.0);
    assert_eq!((b.train_rows, b.holdout_rows), (2400, 600));
    assert!(b.holdout_accuracy_mean >= 0.85, "{:?}", b.holdout_accuracy);
    assert_eq!(b.closed_loop.inputs.len(), 40);
}

#[test]
fn noisy_replicates_depend_only_on_their_stream() {
    let config = HarnessConfig::benchmark(5.1);
    let theta = identified(&config);
    let a = run_closed_loop(&theta, &config, &noisy(), &mut replicate_stream(3, 4, 5)).unwrap();
    let b = run_closed_loop(&theta, &config, &noisy(), &mut replicate_stream(3, 4, 5)).unwrap();
    let c = run_closed_loop(&theta, &config, &noisy(), &mut replicate_stream(3, 4, 6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.measurements, c.measurements);
}
