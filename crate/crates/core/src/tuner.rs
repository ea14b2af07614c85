//! Bayesian optimization of the backoff scalings `γ`.
//!
//! Each candidate `γ` is scored by retraining the policy at the tightened
//! constraints and measuring the lower satisfaction bound on fresh
//! rollouts. A GP over `(γ, residual)` picks the next candidate by LCB.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, N_CONSTRAINTS};
use crate::error::{Error, Result};
use crate::gp::{FitOptions, GpModel, Kernel};
use crate::optim::nelder_mead;
use crate::policy::{PolicyArch, PolicyNet};
use crate::rng::{stream, Stage, Stream};
use crate::sobol::Sobol;
use crate::stats::{residual, EcdfSummary};
use crate::trainer::{evaluate_policy, train_fixed_backoff, BackoffSchedule, PolicyRollouts, StreamKey, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerConfig {
    /// Allowed joint violation probability.
    pub alpha: f64,
    /// Confidence parameter of the lower bound.
    pub epsilon: f64,
    /// Quantile level of the initial backoffs is `1 − δ`.
    pub delta: f64,
    pub design_points: usize,
    pub max_iterations: usize,
    pub tol: f64,
    pub gamma_lo: Vec<f64>,
    pub gamma_hi: Vec<f64>,
    /// Fresh rollouts per candidate; `None` uses the training batch size.
    pub eval_rollouts: Option<usize>,
    pub lcb_beta: f64,
    pub acquisition_starts: usize,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.01,
            epsilon: 0.01,
            delta: 0.05,
            design_points: 5,
            max_iterations: 200,
            tol: 1e-4,
            gamma_lo: vec![0.0; N_CONSTRAINTS],
            gamma_hi: vec![3.0; N_CONSTRAINTS],
            eval_rollouts: None,
            lcb_beta: 3.0,
            acquisition_starts: 1024,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) || !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("alpha and epsilon must lie in (0, 1)".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.design_points < 2 {
            return bad("the initial design needs at least 2 points".into());
        }
        if self.gamma_lo.len() != self.gamma_hi.len() || self.gamma_lo.is_empty() {
            return bad("gamma bounds must have matching non-zero length".into());
        }
        if self.gamma_lo.iter().zip(&self.gamma_hi).any(|(l, h)| !(0.0 <= *l && l < h && h.is_finite())) {
            return bad(format!("gamma bounds must satisfy 0 <= lo < hi: {:?} {:?}", self.gamma_lo, self.gamma_hi));
        }
        if !(self.tol >= 0.0) || !(self.lcb_beta >= 0.0) || self.acquisition_starts == 0 {
            return bad("tol, lcb_beta must be >= 0 and acquisition_starts > 0".into());
        }
        Ok(())
    }

    pub fn target(&self) -> f64 {
        1.0 - self.alpha
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub index: usize,
    pub gamma: Vec<f64>,
    pub backoffs: BackoffSchedule,
    pub theta: Vec<f64>,
    pub summary: EcdfSummary,
    pub residual: f64,
    pub mean_return: f64,
    pub mean_product: f64,
    pub epochs: usize,
}

/// Scores one candidate `γ`. `warm` is the starting policy.
pub trait GammaEvaluator {
    fn evaluate(&mut self, gamma: &[f64], warm: &[f64], index: usize) -> Result<EvaluationRecord>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TunerState {
    pub format_version: u32,
    pub base: Vec<Vec<f64>>,
    pub design: Vec<Vec<f64>>,
    pub records: Vec<EvaluationRecord>,
    /// Completed BO iterations.
    pub iteration: usize,
    pub initial_theta: Vec<f64>,
    pub converged: bool,
    /// The iteration budget ran out before the tolerance was met.
    pub exhausted: bool,
}

impl TunerState {
    pub fn new(base: Vec<Vec<f64>>, initial_theta: Vec<f64>, cfg: &TunerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if base.len() != cfg.gamma_lo.len() {
            return Err(Error::InvalidConfig(format!("{} constraints but {} gamma bounds", base.len(), cfg.gamma_lo.len())));
        }
        let design = initial_design(cfg, &mut stream(seed, Stage::Design, &[]));
        Ok(Self {
            format_version: 1,
            base,
            design,
            records: Vec::new(),
            iteration: 0,
            initial_theta,
            converged: false,
            exhausted: false,
        })
    }

    pub fn gammas(&self) -> Vec<Vec<f64>> {
        self.records.iter().map(|r| r.gamma.clone()).collect()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    pub fn best(&self) -> Option<&EvaluationRecord> {
        self.records.iter().min_by(|a, b| a.residual.total_cmp(&b.residual))
    }

    /// Running minimum of the residual after each record.
    pub fn incumbent_residuals(&self) -> Vec<f64> {
        self.records
            .iter()
            .scan(f64::INFINITY, |best, r| {
                *best = best.min(r.residual);
                Some(*best)
            })
            .collect()
    }

    /// One row per evaluation: `m,gamma_1..gamma_ng,F_S,F_lb,residual,J_mean`;
    /// design points carry `m = 0`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let ctx = "writing tuner csv";
        let n_g = self.base.len();
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["m".to_string()];
        header.extend((1..=n_g).map(|j| format!("gamma_{j}")));
        header.extend(["F_S", "F_lb", "residual", "J_mean"].map(String::from));
        out.write_record(&header).map_err(|e| Error::csv(ctx, e))?;
        let n_design = self.design.len();
        for r in &self.records {
            let m = if r.index < n_design { 0 } else { r.index + 1 - n_design };
            let mut row = vec![m.to_string()];
            row.extend(r.gamma.iter().map(|g| g.to_string()));
            row.extend([r.summary.f_s, r.summary.f_lb, r.residual, r.mean_return].map(|v| v.to_string()));
            out.write_record(&row).map_err(|e| Error::csv(ctx, e))?;
        }
        out.flush().map_err(|e| Error::io("tuner csv", e))
    }
}

/// Latin hypercube over the box with the first point replaced by `γ = 1`.
pub fn initial_design(cfg: &TunerConfig, rng: &mut Stream) -> Vec<Vec<f64>> {
    let n = cfg.design_points;
    let dim = cfg.gamma_lo.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for d in 0..dim {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(rng);
        let (lo, hi) = (cfg.gamma_lo[d], cfg.gamma_hi[d]);
        cols.push(strata.iter().map(|&k| lo + (hi - lo) * (k as f64 + rng.random::<f64>()) / n as f64).collect());
    }
    let mut design: Vec<Vec<f64>> = (0..n).map(|i| (0..dim).map(|d| cols[d][i]).collect()).collect();
    design[0] = (0..dim).map(|d| 1.0f64.clamp(cfg.gamma_lo[d], cfg.gamma_hi[d])).collect();
    design
}

/// SE-kernel GP from `γ` to the squared residual.
pub fn fit_residual_gp(gammas: &[Vec<f64>], residuals: &[f64], seed: u64, iteration: usize) -> Result<GpModel> {
    if gammas.len() < 2 {
        return Err(Error::EmptyDataset("the residual model needs at least two evaluations".into()));
    }
    if gammas.iter().all(|g| g == &gammas[0]) {
        return Err(Error::DegenerateConfig("every evaluated gamma is identical".into()));
    }
    let (gp, _) = GpModel::fit(
        Kernel::SquaredExponential,
        gammas.to_vec(),
        residuals.to_vec(),
        &FitOptions::default(),
        &mut stream(seed, Stage::Acquire, &[iteration as u64]),
    )?;
    Ok(gp)
}

pub fn lcb(model: &GpModel, gamma: &[f64], beta: f64) -> f64 {
    let (m, v) = model.predict(gamma);
    m - beta * v.sqrt()
}

/// Minimizes `μ − β σ` over the box: quasi-random starts, then simplex
/// refinement of the best few.
pub fn acquire_next(model: &GpModel, lo: &[f64], hi: &[f64], beta: f64, starts: usize) -> Result<Vec<f64>> {
    let dim = lo.len();
    let mut sobol = Sobol::new(dim)?;
    let to_box = |p: Vec<f64>| -> Vec<f64> { p.iter().enumerate().map(|(d, u)| lo[d] + (hi[d] - lo[d]) * u).collect() };
    let mut cands: Vec<(f64, Vec<f64>)> = (0..starts)
        .map(|_| {
            let g = to_box(sobol.next_point());
            (lcb(model, &g, beta), g)
        })
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let width = (0..dim).map(|d| hi[d] - lo[d]).fold(f64::INFINITY, f64::min);
    let mut best = cands[0].clone();
    for (_, start) in cands.iter().take(5) {
        let r = nelder_mead(|g| lcb(model, g, beta), start, 0.05 * width, 200, Some((lo, hi)));
        if r.f < best.0 {
            best = (r.f, r.x);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuneStatus {
    Converged,
    Exhausted,
}

/// Design evaluations followed by BO iterations until the incumbent
/// residual reaches `tol` or `max_iterations` is used up. Resumes from
/// whatever `state` already contains; `checkpoint` runs after every
/// evaluation.
pub fn run_tuner<G: GammaEvaluator>(
    state: &mut TunerState,
    evaluator: &mut G,
    cfg: &TunerConfig,
    seed: u64,
    mut checkpoint: impl FnMut(&TunerState) -> Result<()>,
) -> Result<TuneStatus> {
    cfg.validate()?;
    let warm = |state: &TunerState| state.best().map_or(state.initial_theta.clone(), |r| r.theta.clone());

    while state.records.len() < state.design.len() {
        let index = state.records.len();
        let gamma = state.design[index].clone();
        let rec = evaluator.evaluate(&gamma, &warm(state), index)?;
        log::info!("design {index}: gamma {gamma:?} F_lb {:.4} residual {:.3e}", rec.summary.f_lb, rec.residual);
        state.records.push(rec);
        checkpoint(state)?;
    }

    while !state.converged && state.iteration < cfg.max_iterations {
        let model = fit_residual_gp(&state.gammas(), &state.residuals(), seed, state.iteration)?;
        let gamma = acquire_next(&model, &cfg.gamma_lo, &cfg.gamma_hi, cfg.lcb_beta, cfg.acquisition_starts)?;
        if gamma.iter().zip(&cfg.gamma_hi).any(|(g, h)| (h - g).abs() < 1e-9) {
            log::warn!("acquisition hit the gamma ceiling {:?}", cfg.gamma_hi);
        }
        let index = state.records.len();
        let rec = evaluator.evaluate(&gamma, &warm(state), index)?;
        log::info!(
            "iteration {}: gamma {gamma:?} F_lb {:.4} residual {:.3e}",
            state.iteration + 1,
            rec.summary.f_lb,
            rec.residual
        );
        state.records.push(rec);
        state.iteration += 1;
        state.converged = state.best().is_some_and(|r| r.residual <= cfg.tol);
        state.exhausted = !state.converged && state.iteration >= cfg.max_iterations;
        checkpoint(state)?;
    }
    if state.exhausted {
        log::warn!("tolerance {} not met after {} iterations; returning the best candidate", cfg.tol, state.iteration);
    }
    Ok(if state.converged { TuneStatus::Converged } else { TuneStatus::Exhausted })
}

/// Scores `γ` by training on one plant and evaluating on fresh rollouts.
pub struct PolicyEvaluator<'a, E: Environment> {
    pub env: &'a E,
    pub arch: PolicyArch,
    pub train: TrainConfig,
    pub tuner: TunerConfig,
    pub base: Vec<Vec<f64>>,
    pub seed: u64,
}

impl<E: Environment> PolicyEvaluator<'_, E> {
    pub fn eval_rollouts(&self) -> usize {
        self.tuner.eval_rollouts.unwrap_or(self.train.rollouts)
    }
}

impl<E: Environment> GammaEvaluator for PolicyEvaluator<'_, E> {
    fn evaluate(&mut self, gamma: &[f64], warm: &[f64], index: usize) -> Result<EvaluationRecord> {
        let backoffs = BackoffSchedule::scaled(&self.base, gamma)?;
        let source = PolicyRollouts::new(self.env, self.arch.clone());
        let (theta, report) = train_fixed_backoff(
            &source,
            warm,
            &backoffs,
            &self.train,
            &StreamKey::new(self.seed, Stage::Train, &[1, index as u64]),
            |_| Ok(()),
        )?;
        let net = PolicyNet {
            arch: self.arch.clone(),
            theta,
        };
        let trajs = evaluate_policy(
            self.env,
            &net,
            self.eval_rollouts(),
            &StreamKey::new(self.seed, Stage::Evaluate, &[index as u64]),
        )?;
        let summary = EcdfSummary::from_trajectories(&trajs, self.tuner.epsilon)?;
        let n = trajs.len() as f64;
        Ok(EvaluationRecord {
            index,
            gamma: gamma.to_vec(),
            backoffs,
            residual: residual(summary.f_lb, self.tuner.alpha),
            summary,
            mean_return: trajs.iter().map(|t| t.ret()).sum::<f64>() / n,
            mean_product: trajs.iter().map(|t| t.final_product()).sum::<f64>() / n,
            epochs: report.epochs_run(),
            theta: net.theta,
        })
    }
}
