//! Sobol-designed batches on the noisy plant, a GP model of the transitions,
//! and rollouts of the learned plant.

use ccpo::env::{open_loop, EnvConfig};
use ccpo::gp::{FitOptions, Kernel};
use ccpo::harness::PretrainConfig;
use ccpo::rng::{stream, Stage};
use ccpo::surrogate::{generate_dataset, SurrogateEnv, SurrogateModel};

fn main() -> ccpo::Result<()> {
    let cfg = EnvConfig::noisy();
    let data = generate_dataset(&cfg, 8, 0)?;
    println!("{} transitions from {} episodes", data.transitions.len(), data.episodes);

    let (model, reports) = SurrogateModel::fit(&data, Kernel::Matern32, &FitOptions::default(), 0)?;
    for (d, (gp, r)) in model.models.iter().zip(&reports).enumerate() {
        println!(
            "state {d}: log-lik {:.1} -> {:.1}, noise std {:.3e}",
            r.initial_log_likelihood,
            r.log_likelihood,
            gp.noise_variance().sqrt()
        );
    }

    let controls: Vec<_> = PretrainConfig::default()
        .teacher
        .iter()
        .map(|u| ccpo::env::ControlVec::from_array(*u))
        .collect();
    let gp_env = SurrogateEnv::new(cfg.clone(), model)?;
    let ode_env = ccpo::env::OdeEnv::new(cfg)?;
    for s in 0..3 {
        let (a, _) = open_loop(&gp_env, None, &controls, &mut stream(5, Stage::Evaluate, &[s]))?;
        let (b, _) = open_loop(&ode_env, None, &controls, &mut stream(5, Stage::Evaluate, &[s]))?;
        println!("run {s}: c_q(T) surrogate {:.4}, mechanistic {:.4}", a.final_product(), b.final_product());
    }
    Ok(())
}
