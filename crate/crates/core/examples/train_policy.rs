//! Hot start from the teacher profile, then a short policy-gradient run at
//! the original constraints.

use ccpo::env::OdeEnv;
use ccpo::harness::{initial_policy, RunConfig};
use ccpo::rng::Stage;
use ccpo::stats::EcdfSummary;
use ccpo::trainer::{evaluate_policy, train_fixed_backoff, BackoffSchedule, PolicyRollouts, StreamKey};

fn main() -> ccpo::Result<()> {
    let mut cfg = RunConfig::ode_low_penalty();
    cfg.train.rollouts = 100;
    cfg.train.max_epochs = 20;
    let env = OdeEnv::new(cfg.env.clone())?;

    let (start, losses) = initial_policy(&env, &cfg)?;
    println!("pretraining NLL {:.3} -> {:.3}", losses[0], losses.last().unwrap());

    let report_of = |label: &str, theta: &[f64]| -> ccpo::Result<()> {
        let net = start.with_theta(theta.to_vec());
        let trajs = evaluate_policy(&env, &net, 200, &StreamKey::new(cfg.seed, Stage::FinalEvaluate, &[]))?;
        let s = EcdfSummary::from_trajectories(&trajs, 0.01)?;
        let cq = trajs.iter().map(|t| t.final_product()).sum::<f64>() / trajs.len() as f64;
        println!("{label:<10} F_S {:.3}  F_lb {:.3}  mean c_q(T) {cq:.4}", s.f_s, s.f_lb);
        Ok(())
    };
    report_of("pretrained", &start.theta)?;

    let (theta, report) = train_fixed_backoff(
        &PolicyRollouts::new(&env, cfg.policy.clone()),
        &start.theta,
        &BackoffSchedule::zeros(2, cfg.env.horizon),
        &cfg.train,
        &StreamKey::new(cfg.seed, Stage::Train, &[0]),
        |_| Ok(()),
    )?;
    for e in &report.epochs {
        println!("epoch {:>2}  J_hat {:.4}  J {:.4}  penalty {:.4}", e.epoch, e.mean_penalized, e.mean_return, e.mean_penalty);
    }
    report_of("trained", &theta)
}
