//! Experiment pipelines behind the `ccpo` binary: config handling,
//! pretraining, training, tuning, evaluation and surrogate data.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::env::{ControlVec, EnvConfig, Environment, OdeEnv, Trajectory, N_CONTROLS};
use crate::error::{Error, Result};
use crate::gp::{FitOptions, Kernel};
use crate::io::{read_json, write_atomic, write_json};
use crate::policy::{pretrain, squash, unsquash, HistoryWindow, PolicyArch, PolicyNet, PretrainSample};
use crate::rng::{stream, Stage};
use crate::stats::{empirical_quantile, initial_backoffs, joint_violation_value, EcdfSummary};
use crate::surrogate::{generate_dataset, EpisodeDataset, SurrogateEnv, SurrogateModel};
use crate::trainer::{evaluate_policy, train_fixed_backoff, BackoffSchedule, PolicyRollouts, StreamKey, TrainConfig, TrainReport};
use crate::tuner::{run_tuner, PolicyEvaluator, TuneStatus, TunerConfig, TunerState};

/// Prefix of environment variables that override config keys, e.g.
/// `CCPO_TRAIN__ROLLOUTS=200`.
pub const ENV_PREFIX: &str = "CCPO_";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Ode,
    Surrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub enabled: bool,
    /// Open-loop control profile imitated during the hot start, one `[I, F_N]` per interval.
    pub teacher: Vec<[f64; N_CONTROLS]>,
    pub episodes: usize,
    /// Std of the pre-squash perturbation applied to teacher controls while collecting states.
    pub exploration_std: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            teacher: vec![
                [283.0, 35.5],
                [282.1, 17.3],
                [280.3, 18.5],
                [278.5, 26.0],
                [270.2, 36.6],
                [238.3, 39.6],
                [212.4, 39.6],
                [190.9, 39.6],
                [175.9, 39.6],
                [169.9, 39.6],
                [176.0, 39.6],
                [197.4, 39.6],
            ],
            episodes: 64,
            exploration_std: 0.3,
            epochs: 500,
            lr: 1e-2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurrogateConfig {
    pub episodes: usize,
    pub kernel: Kernel,
    pub restarts: usize,
    pub iterations: usize,
    /// Existing dataset to fit instead of `<out>/dataset.csv`.
    pub dataset: Option<PathBuf>,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            episodes: 8,
            kernel: Kernel::Matern32,
            restarts: 5,
            iterations: 200,
            dataset: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub case: Case,
    pub env: EnvConfig,
    pub policy: PolicyArch,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub tuner: TunerConfig,
    pub surrogate: SurrogateConfig,
    /// Rollouts for the final nominal/tuned comparison and `eval`.
    pub eval_rollouts: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::ode()
    }
}

impl RunConfig {
    /// Parametric uncertainty on the mechanistic plant.
    pub fn ode() -> Self {
        Self {
            case: Case::Ode,
            env: EnvConfig::default(),
            policy: PolicyArch::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::default(),
            tuner: TunerConfig::default(),
            surrogate: SurrogateConfig::default(),
            eval_rollouts: 1000,
            seed: 0,
            out_dir: PathBuf::from("runs/ode"),
        }
    }

    /// Process and measurement noise, learned GP plant.
    pub fn surrogate() -> Self {
        Self {
            case: Case::Surrogate,
            env: EnvConfig::noisy(),
            train: TrainConfig {
                p: 2,
                ..TrainConfig::default()
            },
            tuner: TunerConfig {
                alpha: 0.05,
                ..TunerConfig::default()
            },
            out_dir: PathBuf::from("runs/surrogate"),
            ..Self::ode()
        }
    }

    /// Case 1 with penalty weight 0.1 and a geometric step decay.
    pub fn ode_low_penalty() -> Self {
        Self {
            train: TrainConfig {
                kappa: 0.1,
                lr_decay: 0.97,
                ..TrainConfig::default()
            },
            out_dir: PathBuf::from("runs/ode-low-penalty"),
            ..Self::ode()
        }
    }

    /// Reduced budget: S = 200, K = 50, M = 20, 200 evaluation rollouts.
    pub fn desk(mut self) -> Self {
        self.train.rollouts = 200;
        self.train.max_epochs = 50;
        self.tuner.max_iterations = 20;
        self.eval_rollouts = 200;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        self.tuner.validate()?;
        if self.policy.bounds != self.env.bounds {
            return Err(Error::InvalidConfig("policy and environment control bounds differ".into()));
        }
        if self.pretrain.enabled && self.pretrain.teacher.len() != self.env.horizon {
            return Err(Error::InvalidConfig(format!(
                "teacher profile has {} intervals, horizon is {}",
                self.pretrain.teacher.len(),
                self.env.horizon
            )));
        }
        if self.eval_rollouts < 1 {
            return Err(Error::InvalidConfig("eval_rollouts must be >= 1".into()));
        }
        Ok(())
    }

    /// Reads a JSON config and applies `CCPO_*` overrides from `vars`.
    pub fn load(path: &Path, vars: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, vars, &path.display().to_string())
    }

    pub fn from_json(text: &str, vars: impl IntoIterator<Item = (String, String)>, origin: &str) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| Error::json(origin, e))?;
        apply_overrides(&mut value, vars)?;
        let cfg: Self = serde_json::from_value(value).map_err(|e| Error::json(origin, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value.as_object_mut().expect("config is an object").remove("out_dir");
        let text = value.to_string();
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Sets `a.b.c` for every `CCPO_A__B__C=value`. Values parse as JSON and
/// fall back to strings.
pub fn apply_overrides(value: &mut Value, vars: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    for (key, raw) in vars {
        let Some(path) = key.strip_prefix(ENV_PREFIX) else { continue };
        let parts: Vec<String> = path.split("__").map(|p| p.to_ascii_lowercase()).collect();
        let parsed = serde_json::from_str(&raw).unwrap_or(Value::String(raw.clone()));
        let mut node = &mut *value;
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| Error::InvalidConfig(format!("{key}: {part:?} is not inside an object")))?;
            if i + 1 == parts.len() {
                obj.insert(part.clone(), parsed.clone());
                break;
            }
            node = obj.entry(part.clone()).or_insert_with(|| Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Paths of everything a run writes.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    pub fn file(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
    pub fn pretrained(&self) -> PathBuf {
        self.file("policy_pretrained.json")
    }
    pub fn nominal(&self) -> PathBuf {
        self.file("policy_nominal.json")
    }
    pub fn tuned(&self) -> PathBuf {
        self.file("policy_tuned.json")
    }
    pub fn dataset(&self) -> PathBuf {
        self.file("dataset.csv")
    }
    pub fn surrogate(&self) -> PathBuf {
        self.file("surrogate.json")
    }
    pub fn tuner_state(&self) -> PathBuf {
        self.file("tuner_state.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.file("manifest.json")
    }
}

/// Stage timings and headline results.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub build: String,
    pub seed: u64,
    pub wall_seconds: BTreeMap<String, f64>,
    pub nominal: Option<EcdfSummary>,
    pub tuned: Option<EcdfSummary>,
    pub nominal_mean_product: Option<f64>,
    pub tuned_mean_product: Option<f64>,
    pub target: Option<f64>,
    pub tuned_gamma: Option<Vec<f64>>,
    pub tuner_status: Option<TuneStatus>,
    pub bo_iterations: Option<usize>,
}

impl RunManifest {
    fn new(cfg: &RunConfig) -> Self {
        Self {
            config_hash: cfg.hash(),
            build: build_id(),
            seed: cfg.seed,
            ..Self::default()
        }
    }

    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f()?;
        self.wall_seconds.insert(stage.to_string(), t0.elapsed().as_secs_f64());
        Ok(out)
    }
}

pub fn build_id() -> String {
    match option_env!("CCPO_BUILD_REV") {
        Some(rev) => format!("{} ({rev})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// Plant used for training and evaluation.
pub enum Plant {
    Ode(OdeEnv),
    Surrogate(SurrogateEnv),
}

/// Dispatches a generic closure over the concrete plant.
macro_rules! with_plant {
    ($plant:expr, $env:ident => $body:expr) => {
        match $plant {
            Plant::Ode($env) => $body,
            Plant::Surrogate($env) => $body,
        }
    };
}

/// Builds the plant; for the surrogate case the model is loaded from the
/// run directory or fitted on the spot.
pub fn build_plant(cfg: &RunConfig, paths: &RunPaths) -> Result<Plant> {
    match cfg.case {
        Case::Ode => Ok(Plant::Ode(OdeEnv::new(cfg.env.clone())?)),
        Case::Surrogate => {
            let model = if paths.surrogate().exists() {
                SurrogateModel::load(&paths.surrogate())?
            } else {
                fit_surrogate(cfg, paths)?
            };
            Ok(Plant::Surrogate(SurrogateEnv::new(cfg.env.clone(), model)?))
        }
    }
}

/// Supervised samples: teacher controls labelled at the states visited
/// while applying perturbed teacher controls.
pub fn teacher_samples<E: Environment>(env: &E, cfg: &PretrainConfig, arch: &PolicyArch, seed: u64) -> Result<Vec<PretrainSample>> {
    let b = &arch.bounds;
    let teacher: Vec<ControlVec> = cfg.teacher.iter().map(|u| ControlVec::from_array(*u)).collect();
    let mut samples = Vec::with_capacity(cfg.episodes * teacher.len());
    for e in 0..cfg.episodes {
        let mut rng = stream(seed, Stage::Pretrain, &[e as u64]);
        let (episode, mut x) = env.reset(&mut rng)?;
        let mut history = HistoryWindow::empty(arch.window);
        for (t, target) in teacher.iter().enumerate().take(env.horizon()) {
            let y = env.observe(&x, &mut rng);
            samples.push(PretrainSample {
                x: y,
                history: history.clone(),
                u: *target,
            });
            let ta = target.to_array();
            let mut u = [0.0; N_CONTROLS];
            for d in 0..N_CONTROLS {
                let z: f64 = StandardNormal.sample(&mut rng);
                let a = unsquash(ta[d], b.lo[d], b.hi[d], d)? + cfg.exploration_std * z;
                u[d] = squash(a, b.lo[d], b.hi[d]);
            }
            let u = ControlVec::from_array(u);
            let next = env.step(&episode, &x, &u, t, &mut rng)?;
            history.push(y, u);
            x = next;
        }
    }
    Ok(samples)
}

/// Random initialization, then the supervised hot start if enabled.
pub fn initial_policy<E: Environment>(env: &E, cfg: &RunConfig) -> Result<(PolicyNet, Vec<f64>)> {
    let net = PolicyNet::init(cfg.policy.clone(), &mut stream(cfg.seed, Stage::Init, &[]))?;
    if !cfg.pretrain.enabled {
        return Ok((net, Vec::new()));
    }
    let data = teacher_samples(env, &cfg.pretrain, &cfg.policy, cfg.seed)?;
    let (net, report) = pretrain(&net, &data, cfg.pretrain.epochs, cfg.pretrain.lr)?;
    log::info!("pretraining NLL {:.4} -> {:.4}", report.initial_loss, report.best_loss);
    Ok((net, report.losses))
}

fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,nll\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{l}\n"));
    }
    write_atomic(path, out.as_bytes())
}

fn write_report(path: &Path, report: &TrainReport) -> Result<()> {
    let mut buf = Vec::new();
    report.write_csv(&mut buf)?;
    write_atomic(path, &buf)
}

pub fn cmd_pretrain(cfg: &RunConfig) -> Result<PolicyNet> {
    let paths = RunPaths::new(&cfg.out_dir);
    let plant = build_plant(cfg, &paths)?;
    let (net, losses) = with_plant!(&plant, env => initial_policy(env, cfg))?;
    net.save(paths.pretrained())?;
    write_losses(&paths.file("pretrain_loss.csv"), &losses)?;
    Ok(net)
}

fn starting_policy<E: Environment>(env: &E, cfg: &RunConfig, paths: &RunPaths) -> Result<PolicyNet> {
    if paths.pretrained().exists() {
        let net = PolicyNet::load(paths.pretrained())?;
        if net.arch != cfg.policy {
            return Err(Error::InvalidConfig(format!(
                "{} was trained with a different architecture",
                paths.pretrained().display()
            )));
        }
        return Ok(net);
    }
    let (net, losses) = initial_policy(env, cfg)?;
    net.save(paths.pretrained())?;
    write_losses(&paths.file("pretrain_loss.csv"), &losses)?;
    Ok(net)
}

fn train_nominal<E: Environment>(env: &E, cfg: &RunConfig, start: &PolicyNet, paths: &RunPaths) -> Result<(PolicyNet, TrainReport)> {
    let source = PolicyRollouts::new(env, cfg.policy.clone());
    let ckpt = paths.file("checkpoints/train.json");
    let (theta, report) = train_fixed_backoff(
        &source,
        &start.theta,
        &BackoffSchedule::zeros(crate::env::N_CONSTRAINTS, env.horizon()),
        &cfg.train,
        &StreamKey::new(cfg.seed, Stage::Train, &[0]),
        |c| write_json(&ckpt, c),
    )?;
    Ok((start.with_theta(theta), report))
}

/// Pretrain (unless a pretrained policy exists) and train at `b = 0`.
pub fn cmd_train(cfg: &RunConfig) -> Result<(PolicyNet, TrainReport)> {
    let paths = RunPaths::new(&cfg.out_dir);
    let plant = build_plant(cfg, &paths)?;
    with_plant!(&plant, env => {
        let start = starting_policy(env, cfg, &paths)?;
        let (net, report) = train_nominal(env, cfg, &start, &paths)?;
        net.save(paths.nominal())?;
        write_report(&paths.file("train_report.csv"), &report)?;
        Ok((net, report))
    })
}

/// Result of the full tuning pipeline.
pub struct TuneOutcome {
    pub nominal: PolicyNet,
    pub tuned: PolicyNet,
    pub state: TunerState,
    pub manifest: RunManifest,
}

/// The whole pipeline: hot start, nominal training, initial backoffs,
/// BO over `γ`, and the final nominal vs tuned comparison. With `resume`,
/// continues from `tuner_state.json` and the saved nominal policy.
pub fn cmd_tune(cfg: &RunConfig, resume: bool) -> Result<TuneOutcome> {
    let paths = RunPaths::new(&cfg.out_dir);
    let mut manifest = RunManifest::new(cfg);
    let plant = manifest.time("build_plant", || build_plant(cfg, &paths))?;
    with_plant!(&plant, env => tune_on(env, cfg, &paths, &mut manifest, resume))
}

fn tune_on<E: Environment>(env: &E, cfg: &RunConfig, paths: &RunPaths, manifest: &mut RunManifest, resume: bool) -> Result<TuneOutcome> {
    let (nominal, mut state) = if resume && paths.tuner_state().exists() {
        let state: TunerState = read_json(paths.tuner_state())?;
        if state.format_version != 1 {
            return Err(Error::FormatVersion {
                expected: 1,
                found: state.format_version,
            });
        }
        (PolicyNet::load(paths.nominal())?, state)
    } else {
        let start = manifest.time("pretrain", || starting_policy(env, cfg, paths))?;
        let (nominal, report) = manifest.time("train_nominal", || train_nominal(env, cfg, &start, paths))?;
        nominal.save(paths.nominal())?;
        write_report(&paths.file("train_report.csv"), &report)?;
        let base = manifest.time("initial_backoffs", || {
            let trajs = evaluate_policy(env, &nominal, cfg.train.rollouts, &StreamKey::new(cfg.seed, Stage::InitialBackoff, &[]))?;
            let b0 = initial_backoffs(&trajs, cfg.tuner.delta)?;
            write_json(paths.file("initial_backoffs.json"), &b0)?;
            Ok(b0.base)
        })?;
        let state = TunerState::new(base, nominal.theta.clone(), &cfg.tuner, cfg.seed)?;
        (nominal, state)
    };

    let mut evaluator = PolicyEvaluator {
        env,
        arch: cfg.policy.clone(),
        train: cfg.train.clone(),
        tuner: cfg.tuner.clone(),
        base: state.base.clone(),
        seed: cfg.seed,
    };
    let status = manifest.time("tune", || {
        run_tuner(&mut state, &mut evaluator, &cfg.tuner, cfg.seed, |s| {
            write_json(paths.tuner_state(), s)?;
            let mut buf = Vec::new();
            s.write_csv(&mut buf)?;
            write_atomic(&paths.file("tuner_iterations.csv"), &buf)
        })
    })?;
    let best = state.best().expect("tuner evaluated at least the design").clone();
    let tuned = nominal.with_theta(best.theta.clone());
    tuned.save(paths.tuned())?;

    let (nom_sum, nom_prod, tun_sum, tun_prod) = manifest.time("final_evaluation", || {
        let (a, pa) = final_evaluation(env, &nominal, cfg, 0)?;
        let (b, pb) = final_evaluation(env, &tuned, cfg, 1)?;
        Ok((a, pa, b, pb))
    })?;
    manifest.nominal = Some(nom_sum);
    manifest.tuned = Some(tun_sum);
    manifest.nominal_mean_product = Some(nom_prod);
    manifest.tuned_mean_product = Some(tun_prod);
    manifest.target = Some(cfg.tuner.target());
    manifest.tuned_gamma = Some(best.gamma.clone());
    manifest.tuner_status = Some(status);
    manifest.bo_iterations = Some(state.iteration);
    write_json(paths.manifest(), &*manifest)?;
    Ok(TuneOutcome {
        nominal,
        tuned,
        state,
        manifest: manifest.clone(),
    })
}

/// Fresh rollouts in their own stream namespace; `which` separates policies.
pub fn final_evaluation<E: Environment>(env: &E, net: &PolicyNet, cfg: &RunConfig, which: u64) -> Result<(EcdfSummary, f64)> {
    let trajs = evaluate_policy(env, net, cfg.eval_rollouts, &StreamKey::new(cfg.seed, Stage::FinalEvaluate, &[which]))?;
    let summary = EcdfSummary::from_trajectories(&trajs, cfg.tuner.epsilon)?;
    let product = trajs.iter().map(Trajectory::final_product).sum::<f64>() / trajs.len() as f64;
    Ok((summary, product))
}

/// Per-time 2/50/98 % percentiles of a quantity across rollouts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileRow {
    pub quantity: String,
    pub t: usize,
    pub p02: f64,
    pub p50: f64,
    pub p98: f64,
}

pub fn percentile_bands(trajs: &[Trajectory]) -> Result<Vec<PercentileRow>> {
    let mut rows = Vec::new();
    let horizon = trajs.first().map_or(0, Trajectory::horizon);
    let band = |quantity: &str, t: usize, v: Vec<f64>| -> Result<PercentileRow> {
        Ok(PercentileRow {
            quantity: quantity.into(),
            t,
            p02: empirical_quantile(&v, 0.02)?,
            p50: empirical_quantile(&v, 0.50)?,
            p98: empirical_quantile(&v, 0.98)?,
        })
    };
    for (i, name) in ["c_x", "c_N", "c_q"].iter().enumerate() {
        for t in 0..=horizon {
            rows.push(band(name, t, trajs.iter().map(|tr| tr.states[t].to_array()[i]).collect())?);
        }
    }
    for (j, name) in ["g1", "g2"].iter().enumerate() {
        for t in 1..=horizon {
            rows.push(band(name, t, trajs.iter().map(|tr| tr.constraints[t - 1][j]).collect())?);
        }
    }
    Ok(rows)
}

/// Evaluation artifacts written by [`cmd_eval`].
pub struct EvalOutcome {
    pub summary: EcdfSummary,
    pub c_values: Vec<f64>,
    pub bands: Vec<PercentileRow>,
    pub mean_product: f64,
}

/// `S` fresh rollouts of a saved policy. Writes `eval_summary.json`,
/// `eval_percentiles.csv` and `eval_c_values.csv`.
pub fn cmd_eval(cfg: &RunConfig, policy: &Path, rollouts: Option<usize>) -> Result<EvalOutcome> {
    let paths = RunPaths::new(&cfg.out_dir);
    let net = PolicyNet::load(policy)?;
    let plant = build_plant(cfg, &paths)?;
    let s = rollouts.unwrap_or(cfg.eval_rollouts);
    let trajs = with_plant!(&plant, env => evaluate_policy(env, &net, s, &StreamKey::new(cfg.seed, Stage::FinalEvaluate, &[2])))?;
    let c_values: Vec<f64> = trajs.iter().map(joint_violation_value).collect();
    let summary = EcdfSummary::from_c_values(&c_values, cfg.tuner.epsilon)?;
    let bands = percentile_bands(&trajs)?;
    let mean_product = trajs.iter().map(Trajectory::final_product).sum::<f64>() / trajs.len() as f64;

    write_json(paths.file("eval_summary.json"), &summary)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in &bands {
        w.serialize(row).map_err(|e| Error::csv("eval percentiles", e))?;
    }
    write_atomic(&paths.file("eval_percentiles.csv"), &w.into_inner().map_err(|e| Error::io("eval percentiles", e.into_error()))?)?;
    let mut c_csv = String::from("rollout,C\n");
    for (i, c) in c_values.iter().enumerate() {
        c_csv.push_str(&format!("{i},{c}\n"));
    }
    write_atomic(&paths.file("eval_c_values.csv"), c_csv.as_bytes())?;
    Ok(EvalOutcome {
        summary,
        c_values,
        bands,
        mean_product,
    })
}

/// Logs Sobol-designed open-loop episodes on the true plant.
pub fn cmd_gendata(cfg: &RunConfig) -> Result<EpisodeDataset> {
    let paths = RunPaths::new(&cfg.out_dir);
    let data = generate_dataset(&cfg.env, cfg.surrogate.episodes, cfg.seed)?;
    data.save(&paths.dataset())?;
    Ok(data)
}

fn fit_surrogate(cfg: &RunConfig, paths: &RunPaths) -> Result<SurrogateModel> {
    let path = cfg.surrogate.dataset.clone().unwrap_or_else(|| paths.dataset());
    let data = if path.exists() {
        EpisodeDataset::load(&path, cfg.env.horizon)?
    } else if cfg.surrogate.dataset.is_some() {
        return Err(Error::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset not found")));
    } else {
        cmd_gendata(cfg)?
    };
    let opts = FitOptions {
        restarts: cfg.surrogate.restarts,
        iterations: cfg.surrogate.iterations,
        fixed_noise: None,
    };
    let (model, reports) = SurrogateModel::fit(&data, cfg.surrogate.kernel, &opts, cfg.seed)?;
    for (d, r) in reports.iter().enumerate() {
        log::info!("surrogate dim {d}: log likelihood {:.3} (initial {:.3})", r.log_likelihood, r.initial_log_likelihood);
    }
    model.save(&paths.surrogate())?;
    Ok(model)
}

/// Fits the surrogate on the run's dataset (generating it if absent).
pub fn cmd_fit_surrogate(cfg: &RunConfig) -> Result<SurrogateModel> {
    fit_surrogate(cfg, &RunPaths::new(&cfg.out_dir))
}
