//! REINFORCE with a batch-mean baseline on the backoff-penalized return.

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Environment, Trajectory, N_CONSTRAINTS};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::policy::{HistoryWindow, PolicyArch, PolicyNet};
use crate::rng::{stream, Stage, Stream};

/// Constraint tightening `b_{j,t} = γ_j · b⁰_{j,t}`.
///
/// `base[j][t]` tightens `g_j` at time `t + 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackoffSchedule {
    pub base: Vec<Vec<f64>>,
    pub gamma: Vec<f64>,
    pub b: Vec<Vec<f64>>,
}

impl BackoffSchedule {
    pub fn zeros(n_g: usize, horizon: usize) -> Self {
        Self {
            base: vec![vec![0.0; horizon]; n_g],
            gamma: vec![0.0; n_g],
            b: vec![vec![0.0; horizon]; n_g],
        }
    }

    /// Negative base entries are clamped to zero before scaling.
    pub fn scaled(base: &[Vec<f64>], gamma: &[f64]) -> Result<Self> {
        if base.len() != gamma.len() {
            return Err(Error::InvalidConfig(format!("{} scalings for {} constraints", gamma.len(), base.len())));
        }
        if gamma.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::InvalidConfig(format!("backoff scalings must be finite and >= 0, got {gamma:?}")));
        }
        if base.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial backoffs".into()));
        }
        let base: Vec<Vec<f64>> = base.iter().map(|row| row.iter().map(|v| v.max(0.0)).collect()).collect();
        let b = base
            .iter()
            .zip(gamma)
            .map(|(row, g)| row.iter().map(|v| g * v).collect())
            .collect();
        Ok(Self {
            base,
            gamma: gamma.to_vec(),
            b,
        })
    }

    pub fn horizon(&self) -> usize {
        self.b.first().map_or(0, Vec::len)
    }

    pub fn get(&self, j: usize, t: usize) -> f64 {
        self.b[j][t]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kappa: f64,
    /// Penalty exponent, 1 or 2.
    pub p: u32,
    pub rollouts: usize,
    pub max_epochs: usize,
    /// Stop when the smoothed mean penalized return moves by at most this.
    pub tol: f64,
    pub smoothing: usize,
    pub lr: f64,
    /// Per-epoch multiplicative learning-rate decay (1 keeps it constant).
    pub lr_decay: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kappa: 1.0,
            p: 1,
            rollouts: 1000,
            max_epochs: 200,
            tol: 1e-4,
            smoothing: 5,
            lr: 1e-2,
            lr_decay: 1.0,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return bad(format!("kappa must be >= 0, got {}", self.kappa));
        }
        if !matches!(self.p, 1 | 2) {
            return bad(format!("penalty norm p must be 1 or 2, got {}", self.p));
        }
        if self.rollouts < 2 {
            return bad(format!("need at least 2 rollouts per epoch, got {}", self.rollouts));
        }
        if self.max_epochs < 1 {
            return bad("max_epochs must be >= 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.smoothing < 1 {
            return bad("smoothing window must be >= 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("learning rate must be positive and decay in (0, 1]".into());
        }
        Ok(())
    }
}

/// `κ Σ_{j,t} max(g_{j,t} + b_{j,t}, 0)^p`.
pub fn penalty(constraints: &[[f64; N_CONSTRAINTS]], b: &BackoffSchedule, kappa: f64, p: u32) -> f64 {
    let mut total = 0.0;
    for (t, g) in constraints.iter().enumerate() {
        for (j, gj) in g.iter().enumerate() {
            let bj = if t < b.horizon() { b.get(j, t) } else { 0.0 };
            let v = (gj + bj).max(0.0);
            total += if p == 1 { v } else { v.powi(p as i32) };
        }
    }
    kappa * total
}

pub fn penalized_return(traj: &Trajectory, b: &BackoffSchedule, kappa: f64, p: u32) -> f64 {
    traj.ret() - penalty(&traj.constraints, b, kappa, p)
}

pub fn baseline(values: &[f64]) -> f64 {
    crate::stats::running_mean(values)
}

/// Outcome of one training rollout.
#[derive(Clone, Debug)]
pub struct Rollout {
    pub ret: f64,
    pub constraints: Vec<[f64; N_CONSTRAINTS]>,
    /// `Σ_t ∇θ log π(u_t | ·)`.
    pub score: Vec<f64>,
    /// Parameter version the rollout was collected with.
    pub version: u64,
}

/// Anything that can roll out a parametrized stochastic policy.
pub trait RolloutSource: Sync {
    type Prepared: Sync;

    fn param_count(&self) -> usize;

    fn prepare(&self, theta: &[f64]) -> Result<Self::Prepared>;

    fn rollout(&self, prepared: &Self::Prepared, rng: &mut Stream) -> Result<(Rollout, Option<Trajectory>)>;
}

/// `(1/S) Σ_s (Ĵˢ − β̄) scoreˢ`.
pub fn gradient_estimate(rollouts: &[Rollout], penalized: &[f64], beta: f64, version: u64) -> Result<Vec<f64>> {
    let Some(first) = rollouts.first() else {
        return Err(Error::EmptyDataset("no rollouts for the gradient".into()));
    };
    if let Some(r) = rollouts.iter().find(|r| r.version != version) {
        return Err(Error::MismatchedParameters {
            expected: version,
            found: r.version,
        });
    }
    let mut g = vec![0.0; first.score.len()];
    for (r, j) in rollouts.iter().zip(penalized) {
        let adv = j - beta;
        if adv == 0.0 {
            continue;
        }
        for (gi, si) in g.iter_mut().zip(&r.score) {
            *gi += adv * si;
        }
    }
    let s = rollouts.len() as f64;
    g.iter_mut().for_each(|v| *v /= s);
    Ok(g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_penalized: f64,
    pub mean_return: f64,
    pub mean_penalty: f64,
    pub baseline: f64,
    pub grad_norm: f64,
    pub lr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stop: StopReason,
}

impl TrainReport {
    pub const CSV_HEADER: [&'static str; 7] = ["epoch", "mean_J_hat", "mean_J", "mean_penalty", "baseline", "grad_norm", "lr"];

    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let ctx = "writing train report csv";
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER).map_err(|e| Error::csv(ctx, e))?;
        for e in &self.epochs {
            out.serialize((e.epoch, e.mean_penalized, e.mean_return, e.mean_penalty, e.baseline, e.grad_norm, e.lr))
                .map_err(|e| Error::csv(ctx, e))?;
        }
        out.flush().map_err(|e| Error::io("train report csv", e))
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<EpochStats>> {
        let mut rdr = csv::Reader::from_reader(r);
        rdr.deserialize()
            .map(|row| {
                let (epoch, mean_penalized, mean_return, mean_penalty, baseline, grad_norm, lr): (usize, f64, f64, f64, f64, f64, f64) =
                    row.map_err(|e| Error::csv("reading train report csv", e))?;
                Ok(EpochStats {
                    epoch,
                    mean_penalized,
                    mean_return,
                    mean_penalty,
                    baseline,
                    grad_norm,
                    lr,
                })
            })
            .collect()
    }
}

/// Training state handed to the checkpoint hook.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub epoch: usize,
    pub theta: Vec<f64>,
    pub adam: Adam,
    pub report: TrainReport,
}

/// Where rollout streams come from: `stream(seed, Train, key ‖ [epoch, s])`.
#[derive(Clone, Debug)]
pub struct StreamKey {
    pub seed: u64,
    pub stage: Stage,
    pub prefix: Vec<u64>,
}

impl StreamKey {
    pub fn new(seed: u64, stage: Stage, prefix: &[u64]) -> Self {
        Self {
            seed,
            stage,
            prefix: prefix.to_vec(),
        }
    }

    pub fn stream(&self, tail: &[u64]) -> Stream {
        let mut parts = self.prefix.clone();
        parts.extend_from_slice(tail);
        stream(self.seed, self.stage, &parts)
    }
}

/// Change between the mean penalized return of the last `w` epochs and
/// of the `w` before them; infinite until both windows are full.
pub fn smoothed_change(epochs: &[EpochStats], w: usize) -> f64 {
    let n = epochs.len();
    if n < 2 * w {
        return f64::INFINITY;
    }
    let mean = |s: &[EpochStats]| s.iter().map(|e| e.mean_penalized).sum::<f64>() / w as f64;
    (mean(&epochs[n - w..]) - mean(&epochs[n - 2 * w..n - w])).abs()
}

/// Algorithm loop for a fixed backoff schedule. Returns the final
/// parameters and the per-epoch report.
pub fn train_fixed_backoff<R: RolloutSource>(
    source: &R,
    theta0: &[f64],
    b: &BackoffSchedule,
    cfg: &TrainConfig,
    key: &StreamKey,
    mut checkpoint: impl FnMut(&TrainCheckpoint) -> Result<()>,
) -> Result<(Vec<f64>, TrainReport)> {
    cfg.validate()?;
    if theta0.len() != source.param_count() {
        return Err(Error::MismatchedParameters {
            expected: source.param_count() as u64,
            found: theta0.len() as u64,
        });
    }
    let mut theta = theta0.to_vec();
    let mut adam = Adam::new(theta.len(), cfg.lr);
    let mut report = TrainReport {
        epochs: Vec::new(),
        stop: StopReason::MaxEpochs,
    };
    for epoch in 0..cfg.max_epochs {
        let version = epoch as u64;
        let prepared = source.prepare(&theta)?;
        let rollouts: Vec<Rollout> = (0..cfg.rollouts)
            .into_par_iter()
            .map(|s| {
                let mut rng = key.stream(&[epoch as u64, s as u64]);
                source.rollout(&prepared, &mut rng).map(|(mut r, _)| {
                    r.version = version;
                    r
                })
            })
            .collect::<Result<_>>()?;

        let penalties: Vec<f64> = rollouts.iter().map(|r| penalty(&r.constraints, b, cfg.kappa, cfg.p)).collect();
        let penalized: Vec<f64> = rollouts.iter().zip(&penalties).map(|(r, p)| r.ret - p).collect();
        let beta = baseline(&penalized);
        let grad = gradient_estimate(&rollouts, &penalized, beta, version)?;
        let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() || !beta.is_finite() {
            return Err(Error::NonFinite(format!(
                "policy gradient at epoch {epoch}: baseline {beta}, gradient norm {grad_norm}"
            )));
        }
        adam.lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        adam.step(&mut theta, &grad, true);

        let returns: Vec<f64> = rollouts.iter().map(|r| r.ret).collect();
        report.epochs.push(EpochStats {
            epoch,
            mean_penalized: beta,
            mean_return: baseline(&returns),
            mean_penalty: baseline(&penalties),
            baseline: beta,
            grad_norm,
            lr: adam.lr,
        });
        log::debug!("epoch {epoch}: mean J_hat {beta:.6}, |g| {grad_norm:.3e}");

        let done = smoothed_change(&report.epochs, cfg.smoothing) <= cfg.tol;
        if done {
            report.stop = StopReason::Converged;
        }
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            checkpoint(&TrainCheckpoint {
                epoch,
                theta: theta.clone(),
                adam: adam.clone(),
                report: report.clone(),
            })?;
        }
        if done {
            break;
        }
    }
    Ok((theta, report))
}

/// Runs one closed-loop episode with the stochastic policy. With `score`
/// given, `Σ_t ∇θ log π` is accumulated into it.
pub fn closed_loop<E: Environment>(env: &E, net: &PolicyNet, rng: &mut Stream, mut score: Option<&mut [f64]>) -> Result<Trajectory> {
    let (episode, mut x) = env.reset(rng)?;
    let mut traj = Trajectory::with_initial_state(x);
    let mut history = HistoryWindow::empty(net.arch.window);
    for t in 0..env.horizon() {
        let y = env.observe(&x, rng);
        let input = net.arch.encode(&y, &history);
        let a = net.sample_encoded(&input, rng)?;
        if let Some(g) = score.as_deref_mut() {
            net.accumulate_logp_grad(&input, &a.pre, 1.0, g)?;
        }
        let next = env.step(&episode, &x, &a.u, t, rng)?;
        traj.push(a.u, next, env.config());
        history.push(y, a.u);
        x = next;
    }
    traj.finish();
    Ok(traj)
}

/// Closed-loop rollouts of a [`PolicyNet`] on an environment.
pub struct PolicyRollouts<'a, E: Environment> {
    pub env: &'a E,
    pub arch: PolicyArch,
}

impl<'a, E: Environment> PolicyRollouts<'a, E> {
    pub fn new(env: &'a E, arch: PolicyArch) -> Self {
        Self { env, arch }
    }
}

impl<E: Environment> RolloutSource for PolicyRollouts<'_, E> {
    type Prepared = PolicyNet;

    fn param_count(&self) -> usize {
        self.arch.param_count()
    }

    fn prepare(&self, theta: &[f64]) -> Result<PolicyNet> {
        let net = PolicyNet {
            arch: self.arch.clone(),
            theta: theta.to_vec(),
        };
        net.check_finite()?;
        Ok(net)
    }

    fn rollout(&self, net: &PolicyNet, rng: &mut Stream) -> Result<(Rollout, Option<Trajectory>)> {
        let mut score = vec![0.0; net.theta.len()];
        let traj = closed_loop(self.env, net, rng, Some(&mut score))?;
        Ok((
            Rollout {
                ret: traj.ret(),
                constraints: traj.constraints.clone(),
                score,
                version: 0,
            },
            Some(traj),
        ))
    }
}

/// `S` fresh rollouts of a fixed policy, in parallel, one stream each.
pub fn evaluate_policy<E: Environment>(env: &E, net: &PolicyNet, rollouts: usize, key: &StreamKey) -> Result<Vec<Trajectory>> {
    net.check_finite()?;
    (0..rollouts)
        .into_par_iter()
        .map(|s| closed_loop(env, net, &mut key.stream(&[s as u64]), None))
        .collect()
}

/// One-step Gaussian bandit: `a ~ N(θ, σ²)`, reward `−(a − a*)²`.
///
/// `E[J] = −(θ − a*)² − σ²`, so `∇θ E[J] = −2 (θ − a*)` and the optimum is `θ = a*`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianBandit {
    pub target: f64,
    pub sigma: f64,
}

impl GaussianBandit {
    pub fn expected_return(&self, theta: f64) -> f64 {
        -(theta - self.target).powi(2) - self.sigma * self.sigma
    }

    pub fn gradient(&self, theta: f64) -> f64 {
        -2.0 * (theta - self.target)
    }
}

impl RolloutSource for GaussianBandit {
    type Prepared = f64;

    fn param_count(&self) -> usize {
        1
    }

    fn prepare(&self, theta: &[f64]) -> Result<f64> {
        Ok(theta[0])
    }

    fn rollout(&self, theta: &f64, rng: &mut Stream) -> Result<(Rollout, Option<Trajectory>)> {
        let z: f64 = StandardNormal.sample(rng);
        let a = theta + self.sigma * z;
        Ok((
            Rollout {
                ret: -(a - self.target).powi(2),
                constraints: Vec::new(),
                score: vec![(a - theta) / (self.sigma * self.sigma)],
                version: 0,
            },
            None,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvConfig, OdeEnv, StateVec};

    fn traj_with(g: Vec<[f64; 2]>) -> Trajectory {
        let mut t = Trajectory::with_initial_state(StateVec::new(1.0, 150.0, 0.0));
        t.constraints = g;
        t.rewards = vec![-0.01, 0.2];
        t
    }

    #[test]
    fn penalty_examples() {
        let b = BackoffSchedule::zeros(2, 2);
        let feasible = traj_with(vec![[-0.1, -0.3], [-0.2, 0.0]]);
        assert_eq!(penalized_return(&feasible, &b, 1.0, 1), feasible.ret());
        let single = traj_with(vec![[-0.1, 0.2], [-0.2, -0.5]]);
        assert!((penalized_return(&single, &b, 1.0, 1) - (single.ret() - 0.2)).abs() < 1e-15);
        assert!((penalized_return(&single, &b, 1.0, 2) - (single.ret() - 0.04)).abs() < 1e-15);
        let tight = BackoffSchedule::scaled(&[vec![0.0, 0.0], vec![0.5, 0.5]], &[1.0, 1.0]).unwrap();
        assert!((penalty(&feasible.constraints, &tight, 1.0, 1) - 0.2 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn baseline_cancels_equal_returns() {
        assert_eq!(baseline(&[1.0, 2.0, 3.0]), 2.0);
        let r = Rollout {
            ret: 0.3,
            constraints: vec![],
            score: vec![1.0, -2.0],
            version: 4,
        };
        let g = gradient_estimate(&[r.clone(), r.clone()], &[0.3, 0.3], baseline(&[0.3, 0.3]), 4).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        let g = gradient_estimate(&[r.clone()], &[0.7], 0.7, 4).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(matches!(
            gradient_estimate(&[r], &[0.3], 0.0, 5),
            Err(Error::MismatchedParameters { expected: 5, found: 4 })
        ));
    }

    #[test]
    fn infinite_tolerance_runs_one_epoch() {
        let bandit = GaussianBandit { target: 1.0, sigma: 0.5 };
        let cfg = TrainConfig {
            rollouts: 8,
            tol: f64::INFINITY,
            ..TrainConfig::default()
        };
        let (_, report) = train_fixed_backoff(&bandit, &[0.0], &BackoffSchedule::zeros(0, 0), &cfg, &StreamKey::new(0, Stage::Train, &[]), |_| Ok(())).unwrap();
        assert_eq!(report.epochs_run(), 1);
        assert_eq!(report.stop, StopReason::Converged);
    }

    #[test]
    fn checkpoints_every_ten_epochs() {
        let bandit = GaussianBandit { target: 1.0, sigma: 0.5 };
        let cfg = TrainConfig {
            rollouts: 4,
            max_epochs: 25,
            tol: 1e-300,
            ..TrainConfig::default()
        };
        let mut seen = vec![];
        train_fixed_backoff(&bandit, &[0.0], &BackoffSchedule::zeros(0, 0), &cfg, &StreamKey::new(0, Stage::Train, &[]), |c| {
            seen.push(c.epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, vec![9, 19]);
    }

    #[test]
    fn policy_training_is_deterministic() {
        let env = OdeEnv::new(EnvConfig::default()).unwrap();
        let arch = PolicyArch::default();
        let net = PolicyNet::init(arch.clone(), &mut stream(0, Stage::Init, &[])).unwrap();
        let source = PolicyRollouts::new(&env, arch);
        let cfg = TrainConfig {
            rollouts: 6,
            max_epochs: 2,
            ..TrainConfig::default()
        };
        let run = || train_fixed_backoff(&source, &net.theta, &BackoffSchedule::zeros(2, 12), &cfg, &StreamKey::new(3, Stage::Train, &[]), |_| Ok(())).unwrap();
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_ne!(a, net.theta);
    }

    #[test]
    fn report_csv_round_trip() {
        let report = TrainReport {
            epochs: vec![EpochStats {
                epoch: 0,
                mean_penalized: 0.1234567890123,
                mean_return: 0.2,
                mean_penalty: 0.0765432109877,
                baseline: 0.1234567890123,
                grad_norm: 3.5e-3,
                lr: 0.01,
            }],
            stop: StopReason::MaxEpochs,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        assert_eq!(TrainReport::read_csv(buf.as_slice()).unwrap(), report.epochs);
    }
}
