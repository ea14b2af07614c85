//! Confidence bounds on the joint satisfaction probability and the
//! sample-size ceiling they imply.

use ccpo::stats::{lower_bound, EcdfSummary};

fn main() -> ccpo::Result<()> {
    let eps = 0.01;
    println!("{:>6} {:>8} {:>8}", "S", "F_S", "F_lb");
    for s in [50, 200, 1000, 5000] {
        for f in [0.9, 0.99, 1.0] {
            println!("{s:>6} {f:>8.3} {:>8.5}", lower_bound(s, f, eps)?);
        }
    }
    // with every rollout feasible the bound is (ε)^(1/S); it passes 0.99 only from S = 459
    let need = (1..).find(|&s| lower_bound(s, 1.0, eps).unwrap() >= 0.99).unwrap();
    println!("smallest S with F_lb >= 0.99 at F_S = 1: {need}");

    let c = [-0.3, -0.1, 0.02, -0.5, -0.2, 0.0, -0.01, 0.4];
    let summary = EcdfSummary::from_c_values(&c, eps)?;
    println!("{summary:?}");
    Ok(())
}
