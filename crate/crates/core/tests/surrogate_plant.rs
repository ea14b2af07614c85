use std::sync::OnceLock;

use ccpo::env::{random_control, ControlVec, EnvConfig, Environment, StateVec};
use ccpo::gp::{FitOptions, Kernel};
use ccpo::rng::{stream, Stage};
use ccpo::surrogate::{generate_dataset, EpisodeDataset, SurrogateEnv, SurrogateModel};

fn fitted() -> &'static (EpisodeDataset, SurrogateModel) {
    static FIT: OnceLock<(EpisodeDataset, SurrogateModel)> = OnceLock::new();
    FIT.get_or_init(|| {
        let data = generate_dataset(&EnvConfig::noisy(), 8, 21).unwrap();
        let opts = FitOptions {
            restarts: 2,
            iterations: 150,
            fixed_noise: None,
        };
        let (model, _) = SurrogateModel::fit(&data, Kernel::Matern32, &opts, 21).unwrap();
        (data, model)
    })
}

#[test]
fn ten_thousand_random_steps_stay_finite() {
    let (_, model) = fitted();
    let cfg = EnvConfig::noisy();
    let env = SurrogateEnv::new(cfg.clone(), model.clone()).unwrap();
    let mut steps = 0;
    let mut episode = 0u64;
    while steps < 10_000 {
        let mut rng = stream(1, Stage::Evaluate, &[episode]);
        let (ep, mut x) = env.reset(&mut rng).unwrap();
        for t in 0..env.horizon() {
            let u = random_control(&cfg.bounds, &mut rng);
            x = env.step(&ep, &x, &u, t, &mut rng).unwrap();
            assert!(x.is_finite(), "episode {episode} step {t}: {x:?}");
            steps += 1;
        }
        episode += 1;
    }
}

#[test]
fn sampled_spread_matches_predicted_variance() {
    let (data, model) = fitted();
    let tr = &data.transitions[17];
    let (mean, var) = model.predict(&tr.x, &tr.u);
    let n = 20_000;
    let mut rng = stream(2, Stage::Evaluate, &[]);
    let draws: Vec<StateVec> = (0..n).map(|_| model.sample(&tr.x, &tr.u, &mut rng)).collect();
    for d in 0..3 {
        let xs: Vec<f64> = draws.iter().map(|s| s.to_array()[d]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((v / var[d] - 1.0).abs() < 0.1, "dim {d}: sample var {v} predicted {}", var[d]);
        assert!((m - mean[d]).abs() < 5.0 * (var[d] / n as f64).sqrt());
    }
}

#[test]
fn one_step_predictions_cover_training_rows() {
    let (data, model) = fitted();
    let mut inside = 0;
    for tr in &data.transitions {
        let (mean, var) = model.predict(&tr.x, &tr.u);
        let next = tr.next.to_array();
        let ok = (0..3).all(|d| {
            let sd = (var[d] + model.models[d].noise_variance()).sqrt();
            (next[d] - mean[d]).abs() <= 3.0 * sd
        });
        inside += ok as usize;
    }
    let frac = inside as f64 / data.transitions.len() as f64;
    assert!(frac >= 0.95, "{frac}");
}

#[test]
fn zero_variance_scale_is_deterministic() {
    let (_, model) = fitted();
    let mut m = model.clone();
    m.variance_scale = 0.0;
    let x = StateVec::new(1.0, 150.0, 0.0);
    let u = ControlVec::new(300.0, 10.0);
    let a = m.sample(&x, &u, &mut stream(3, Stage::Evaluate, &[]));
    let b = m.sample(&x, &u, &mut stream(4, Stage::Evaluate, &[]));
    assert_eq!(a, b);
    assert_eq!(a.to_array(), m.predict(&x, &u).0);
}
