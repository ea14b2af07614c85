//! REINFORCE on a one-step Gaussian bandit with a known optimum.

use ccpo::rng::Stage;
use ccpo::trainer::{train_fixed_backoff, BackoffSchedule, GaussianBandit, StreamKey, TrainConfig};

fn main() -> ccpo::Result<()> {
    let bandit = GaussianBandit { target: 2.0, sigma: 0.5 };
    let cfg = TrainConfig {
        rollouts: 256,
        max_epochs: 500,
        tol: 1e-6,
        lr: 0.05,
        lr_decay: 0.99,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let (theta, report) = train_fixed_backoff(
        &bandit,
        &[0.0],
        &BackoffSchedule::zeros(0, 0),
        &cfg,
        &StreamKey::new(0, Stage::Train, &[]),
        |_| Ok(()),
    )?;
    for e in report.epochs.iter().step_by(25) {
        println!("epoch {:>3}  mean J {:+.4}  |g| {:.4}", e.epoch, e.mean_penalized, e.grad_norm);
    }
    println!(
        "theta = {:.4} after {} epochs ({:?}); optimum {}, E[J] = {:.4}",
        theta[0],
        report.epochs_run(),
        report.stop,
        bandit.target,
        bandit.expected_return(theta[0])
    );
    Ok(())
}
