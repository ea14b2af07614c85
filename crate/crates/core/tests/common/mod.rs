#![allow(dead_code)]

pub mod oracle;

use ccpo::stats::{residual, EcdfSummary};
use ccpo::trainer::{BackoffSchedule, GaussianBandit, TrainConfig};
use ccpo::tuner::{run_tuner, EvaluationRecord, GammaEvaluator, TuneStatus, TunerConfig, TunerState};
use ccpo::Result;

pub const BANDIT: GaussianBandit = GaussianBandit {
    target: 2.0,
    sigma: 0.5,
};

pub fn bandit_config() -> TrainConfig {
    TrainConfig {
        rollouts: 256,
        max_epochs: 500,
        tol: 1e-6,
        lr: 0.05,
        lr_decay: 0.99,
        checkpoint_every: 0,
        ..TrainConfig::default()
    }
}

/// Analytic `F_lb(γ) = 1 − 0.9 exp(−(γ₁ + γ₂/2))`, increasing in
/// both scalings. The "policy" is `γ` itself and the epoch count is the
/// distance travelled from the warm start.
pub struct MonotoneOracle {
    pub alpha: f64,
    pub calls: usize,
}

impl MonotoneOracle {
    pub fn f_lb(gamma: &[f64]) -> f64 {
        1.0 - 0.9 * (-(gamma[0] + 0.5 * gamma[1])).exp()
    }
}

impl GammaEvaluator for MonotoneOracle {
    fn evaluate(&mut self, gamma: &[f64], warm: &[f64], index: usize) -> Result<EvaluationRecord> {
        self.calls += 1;
        let f_lb = Self::f_lb(gamma);
        let dist = gamma.iter().zip(warm).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        Ok(EvaluationRecord {
            index,
            gamma: gamma.to_vec(),
            backoffs: BackoffSchedule::scaled(&[vec![0.1; 3], vec![0.2; 3]], gamma)?,
            theta: gamma.to_vec(),
            summary: EcdfSummary {
                samples: 1000,
                passes: 1000,
                f_s: 1.0,
                epsilon: 0.01,
                f_lb,
            },
            residual: residual(f_lb, self.alpha),
            mean_return: -f_lb,
            mean_product: 0.0,
            epochs: 1 + (20.0 * dist).ceil() as usize,
        })
    }
}

pub fn oracle_config() -> TunerConfig {
    TunerConfig {
        max_iterations: 30,
        ..TunerConfig::default()
    }
}

pub fn run_oracle(seed: u64) -> (TunerState, TuneStatus) {
    let cfg = oracle_config();
    let mut state = TunerState::new(vec![vec![0.1; 3], vec![0.2; 3]], vec![0.0, 0.0], &cfg, seed).unwrap();
    let mut oracle = MonotoneOracle {
        alpha: cfg.alpha,
        calls: 0,
    };
    let status = run_tuner(&mut state, &mut oracle, &cfg, seed, |_| Ok(())).unwrap();
    (state, status)
}
