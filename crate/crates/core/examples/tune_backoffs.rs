//! Full backoff search on the mechanistic plant at reduced budget
//! (S = 200, K = 50, M = 20). Takes well under a minute in release mode.
//!
//! cargo run --release --example tune_backoffs -- [seed]

use ccpo::harness::{cmd_tune, RunConfig};

fn main() -> ccpo::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = RunConfig::ode_low_penalty().desk();
    cfg.seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    cfg.out_dir = format!("runs/desk-ode-{}", cfg.seed).into();

    let out = cmd_tune(&cfg, false)?;
    let m = &out.manifest;
    let (n, t) = (m.nominal.as_ref().unwrap(), m.tuned.as_ref().unwrap());
    println!("{:<8} {:>6} {:>6} {:>9}", "policy", "F_S", "F_lb", "c_q(T)");
    println!("{:<8} {:>6.3} {:>6.3} {:>9.4}", "nominal", n.f_s, n.f_lb, m.nominal_mean_product.unwrap());
    println!("{:<8} {:>6.3} {:>6.3} {:>9.4}", "tuned", t.f_s, t.f_lb, m.tuned_mean_product.unwrap());
    println!("gamma {:?} after {} BO iterations ({:?})", m.tuned_gamma.as_ref().unwrap(), m.bo_iterations.unwrap(), m.tuner_status.unwrap());
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}
