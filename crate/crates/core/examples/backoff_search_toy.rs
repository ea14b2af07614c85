//! The Bayesian-optimization loop against a closed-form satisfaction curve,
//! so each candidate costs nothing.

use ccpo::stats::{residual, EcdfSummary};
use ccpo::trainer::BackoffSchedule;
use ccpo::tuner::{run_tuner, EvaluationRecord, GammaEvaluator, TunerConfig, TunerState};

struct Curve;

impl GammaEvaluator for Curve {
    fn evaluate(&mut self, gamma: &[f64], _warm: &[f64], index: usize) -> ccpo::Result<EvaluationRecord> {
        let f_lb = 1.0 - 0.9 * (-(gamma[0] + 0.5 * gamma[1])).exp();
        Ok(EvaluationRecord {
            index,
            gamma: gamma.to_vec(),
            backoffs: BackoffSchedule::scaled(&[vec![0.05; 12], vec![0.1; 12]], gamma)?,
            theta: gamma.to_vec(),
            summary: EcdfSummary {
                samples: 1000,
                passes: 1000,
                f_s: 1.0,
                epsilon: 0.01,
                f_lb,
            },
            residual: residual(f_lb, 0.01),
            mean_return: 0.0,
            mean_product: 0.0,
            epochs: 1,
        })
    }
}

fn main() -> ccpo::Result<()> {
    let cfg = TunerConfig::default();
    let mut state = TunerState::new(vec![vec![0.05; 12], vec![0.1; 12]], vec![0.0; 2], &cfg, 0)?;
    let status = run_tuner(&mut state, &mut Curve, &cfg, 0, |_| Ok(()))?;
    state.write_csv(std::io::stdout())?;
    let best = state.best().unwrap();
    println!("{status:?} after {} iterations: gamma {:.3?}, F_lb {:.4}", state.iteration, best.gamma, best.summary.f_lb);
    Ok(())
}
