//! Maximum-likelihood GP fit on a noisy 1-D function.

use ccpo::gp::{FitOptions, GpModel, Kernel};
use ccpo::rng::{stream, Stage};
use rand::Rng;

fn main() -> ccpo::Result<()> {
    let mut rng = stream(3, Stage::Init, &[]);
    let x: Vec<f64> = (0..30).map(|_| rng.random_range(0.0..6.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| v.sin() + 0.05 * rng.random_range(-1.0..1.0)).collect();

    for kernel in [Kernel::Matern32, Kernel::SquaredExponential] {
        let (gp, report) = GpModel::fit(
            kernel,
            x.iter().map(|v| vec![*v]).collect(),
            y.clone(),
            &FitOptions::default(),
            &mut stream(3, Stage::GpFit, &[]),
        )?;
        println!(
            "{kernel:?}: log-lik {:.2} -> {:.2}, lengthscale {:.3}, noise std {:.4}",
            report.initial_log_likelihood,
            report.log_likelihood,
            gp.hyper.lengthscales[0],
            gp.noise_variance().sqrt()
        );
        for z in [0.5, 3.0, 5.5, 8.0] {
            let (m, v) = gp.predict(&[z]);
            println!("  f({z:.1}) = {m:+.3} ± {:.3}   (sin = {:+.3})", 2.0 * v.sqrt(), f64::sin(z));
        }
    }
    Ok(())
}
