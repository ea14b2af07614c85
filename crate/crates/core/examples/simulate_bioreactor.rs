//! Open-loop batch on the photobioreactor: one nominal run and a small
//! Monte-Carlo spread under parametric uncertainty.

use ccpo::env::{open_loop, ControlVec, EnvConfig, OdeEnv};
use ccpo::harness::PretrainConfig;
use ccpo::rng::{stream, Stage};
use ccpo::stats::joint_violation_value;

fn main() -> ccpo::Result<()> {
    let controls: Vec<ControlVec> = PretrainConfig::default().teacher.iter().map(|u| ControlVec::from_array(*u)).collect();

    let nominal = OdeEnv::new(EnvConfig::default().deterministic())?;
    let (traj, _) = open_loop(&nominal, None, &controls, &mut stream(0, Stage::Evaluate, &[]))?;
    println!("{:>3} {:>8} {:>8} {:>8} {:>7} {:>7}", "t", "c_x", "c_N", "c_q", "g1", "g2");
    for (t, x) in traj.states.iter().enumerate() {
        let g = if t == 0 { [f64::NAN; 2] } else { traj.constraints[t - 1] };
        println!("{t:>3} {:>8.4} {:>8.2} {:>8.5} {:>7.3} {:>7.3}", x.c_x, x.c_n, x.c_q, g[0], g[1]);
    }
    println!("return J = {:.5}", traj.ret());

    let env = OdeEnv::new(EnvConfig::default())?;
    let n = 500;
    let mut ok = 0;
    let mut product = 0.0;
    for s in 0..n {
        let (t, _) = open_loop(&env, None, &controls, &mut stream(1, Stage::Evaluate, &[s]))?;
        ok += (joint_violation_value(&t) <= 0.0) as usize;
        product += t.final_product() / n as f64;
    }
    println!("uncertain plant: {ok}/{n} batches feasible, mean c_q(T) {product:.4}");
    Ok(())
}
