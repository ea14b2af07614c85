mod common;

use ccpo::gp::{FitOptions, GpModel, Kernel};
use ccpo::rng::{stream, Stage};
use common::oracle::{dataset, worst_gap};
use rand::Rng;

#[test]
fn posterior_matches_dense_oracle() {
    let gap = worst_gap();
    assert!(gap < 1e-8, "{gap}");
}

#[test]
fn variance_bounded_at_training_inputs() {
    let (x, y) = dataset(9, 25, 2);
    let mut rng = stream(9, Stage::GpFit, &[]);
    let (gp, _) = GpModel::fit(Kernel::Matern32, x.clone(), y, &FitOptions::default(), &mut rng).unwrap();
    for z in &x {
        let (_, v) = gp.predict(z);
        assert!(v >= 0.0);
        assert!(v <= gp.prior_variance() + gp.noise_variance());
    }
}

#[test]
fn sine_toy_is_calibrated() {
    // y = sin(3x) + N(0, 0.1²) on 40 points; fresh draws should land inside
    // mean ± 2 predictive std about 95% of the time.
    let mut rng = stream(11, Stage::Init, &[]);
    let noise = 0.1;
    let draw = |rng: &mut ccpo::rng::Stream| {
        let x: f64 = rng.random_range(0.0..3.0);
        let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
        (x, (3.0 * x).sin() + noise * e)
    };
    let train: Vec<(f64, f64)> = (0..40).map(|_| draw(&mut rng)).collect();
    let (gp, report) = GpModel::fit(
        Kernel::SquaredExponential,
        train.iter().map(|p| vec![p.0]).collect(),
        train.iter().map(|p| p.1).collect(),
        &FitOptions::default(),
        &mut stream(11, Stage::GpFit, &[]),
    )
    .unwrap();
    assert!(report.log_likelihood >= report.initial_log_likelihood);
    let n = 2000;
    let inside = (0..n)
        .filter(|_| {
            let (x, y) = draw(&mut rng);
            let (m, v) = gp.predict_noisy(&[x]);
            (y - m).abs() <= 2.0 * v.sqrt()
        })
        .count() as f64
        / n as f64;
    assert!((0.92..=0.98).contains(&inside), "coverage {inside}");
    assert!((gp.noise_variance().sqrt() - noise).abs() < 0.04, "noise std {}", gp.noise_variance().sqrt());
}
