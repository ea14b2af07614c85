//! Draws from the squashed-Gaussian policy and its score.

use ccpo::env::{ControlVec, StateVec};
use ccpo::policy::{HistoryWindow, PolicyArch, PolicyNet};
use ccpo::rng::{stream, Stage};

fn main() -> ccpo::Result<()> {
    let arch = PolicyArch::default();
    let net = PolicyNet::init(arch.clone(), &mut stream(7, Stage::Init, &[]))?;
    println!("{} parameters, input dimension {}", arch.param_count(), arch.input_dim());

    let mut hist = HistoryWindow::empty(arch.window);
    hist.push(StateVec::new(1.0, 150.0, 0.0), ControlVec::new(250.0, 20.0));
    let x = StateVec::new(1.4, 130.0, 0.004);
    let head = net.forward(&x, &hist)?;
    println!("pre-squash mean {:?}, std {:?}", head.mean, head.std);

    let mut rng = stream(7, Stage::Evaluate, &[]);
    for _ in 0..5 {
        let a = net.sample_action(&x, &hist, &mut rng)?;
        let g = net.logp_grad(&x, &hist, &a.u)?;
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        println!("I = {:7.2}  F_N = {:6.3}  log p = {:8.4}  |score| = {norm:.3}", a.u.light, a.u.inflow, a.logp);
    }
    Ok(())
}
