//! Data-driven plant: one GP per state dimension trained on logged
//! transitions, sampled at every step.

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{observe, sample_episode_context, step, ControlVec, EnvConfig, Environment, StateVec, N_CONTROLS, N_STATES};
use crate::error::{Error, Result};
use crate::gp::{FitOptions, FitReport, GpModel, GpModelFile, Kernel};
use crate::io::{read_json, write_json};
use crate::rng::{stream, Stage, Stream};
use crate::sobol::Sobol;

/// Half-width of the initial-condition box, in standard deviations.
pub const INIT_BOX_STDS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub x: StateVec,
    pub u: ControlVec,
    pub next: StateVec,
}

impl Transition {
    pub fn input(&self) -> Vec<f64> {
        let mut z = self.x.to_array().to_vec();
        z.extend(self.u.to_array());
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeDataset {
    pub transitions: Vec<Transition>,
    pub episodes: usize,
    pub horizon: usize,
    /// Control sequence applied in each episode.
    pub controls: Vec<Vec<ControlVec>>,
}

impl EpisodeDataset {
    pub const CSV_HEADER: [&'static str; 8] = ["x1", "x2", "x3", "u1", "u2", "y1", "y2", "y3"];

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let ctx = "writing dataset csv";
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::CSV_HEADER).map_err(|e| Error::csv(ctx, e))?;
        for tr in &self.transitions {
            let row: Vec<String> = tr
                .x
                .to_array()
                .iter()
                .chain(tr.u.to_array().iter())
                .chain(tr.next.to_array().iter())
                .map(|v| v.to_string())
                .collect();
            out.write_record(&row).map_err(|e| Error::csv(ctx, e))?;
        }
        out.flush().map_err(|e| Error::io("dataset csv", e))
    }

    /// Reads transitions; consecutive rows are grouped into episodes of `horizon`.
    pub fn read_csv<R: Read>(r: R, horizon: usize) -> Result<Self> {
        let ctx = "reading dataset csv";
        let mut rdr = csv::Reader::from_reader(r);
        let mut transitions = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(ctx, e))?;
            let v: Vec<f64> = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidConfig(format!("{ctx}: bad number {s:?}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 8 {
                return Err(Error::InvalidConfig(format!("{ctx}: expected 8 columns, got {}", v.len())));
            }
            transitions.push(Transition {
                x: StateVec::new(v[0], v[1], v[2]),
                u: ControlVec::new(v[3], v[4]),
                next: StateVec::new(v[5], v[6], v[7]),
            });
        }
        if horizon == 0 || transitions.len() % horizon != 0 {
            return Err(Error::InvalidConfig(format!(
                "{ctx}: {} transitions do not split into episodes of {horizon}",
                transitions.len()
            )));
        }
        let controls = transitions.chunks(horizon).map(|c| c.iter().map(|t| t.u).collect()).collect();
        Ok(Self {
            episodes: transitions.len() / horizon,
            horizon,
            transitions,
            controls,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        crate::io::write_atomic(path, &buf)
    }

    pub fn load(path: &Path, horizon: usize) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(f, horizon)
    }
}

/// Logs `episodes` open-loop runs on the true plant. Controls of every
/// interval and the initial `(c_x, c_N)` come from one Sobol point per
/// episode; disturbances and measurement noise come from `seed`.
pub fn generate_dataset(cfg: &EnvConfig, episodes: usize, seed: u64) -> Result<EpisodeDataset> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::InvalidConfig("dataset needs at least one episode".into()));
    }
    let t_max = cfg.horizon;
    let mut sobol = Sobol::new(N_CONTROLS * t_max + 2)?;
    let b = &cfg.bounds;
    let mut transitions = Vec::with_capacity(episodes * t_max);
    let mut all_controls = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let p = sobol.next_point();
        let controls: Vec<ControlVec> = (0..t_max)
            .map(|t| {
                ControlVec::new(
                    b.lo[0] + (b.hi[0] - b.lo[0]) * p[2 * t],
                    b.lo[1] + (b.hi[1] - b.lo[1]) * p[2 * t + 1],
                )
            })
            .collect();
        let init = |d: usize, q: f64| {
            let half = INIT_BOX_STDS * cfg.init_cov[d].sqrt();
            (cfg.init_mean[d] - half + 2.0 * half * q).max(0.0)
        };
        let mut x = StateVec::new(init(0, p[2 * t_max]), init(1, p[2 * t_max + 1]), 0.0);
        let mut rng = stream(seed, Stage::Dataset, &[e as u64]);
        let (_, params) = sample_episode_context(cfg, &mut rng)?;
        let mut y = observe(&x, cfg, &mut rng);
        for (t, u) in controls.iter().enumerate() {
            let next = step(&x, u, &params, cfg, t, &mut rng)?;
            let y_next = observe(&next, cfg, &mut rng);
            transitions.push(Transition { x: y, u: *u, next: y_next });
            x = next;
            y = y_next;
        }
        all_controls.push(controls);
    }
    Ok(EpisodeDataset {
        transitions,
        episodes,
        horizon: t_max,
        controls: all_controls,
    })
}

/// Independent per-dimension GPs over state deltas.
#[derive(Clone, Debug)]
pub struct SurrogateModel {
    pub models: Vec<GpModel>,
    /// Multiplies the sampled variance; 0 turns sampling into the posterior mean.
    pub variance_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct SurrogateFile {
    format_version: u32,
    variance_scale: f64,
    models: Vec<GpModelFile>,
}

impl SurrogateModel {
    /// Fits the three delta models concurrently. Each uses its own
    /// `GpFit` stream so the result does not depend on thread count.
    pub fn fit(data: &EpisodeDataset, kernel: Kernel, opts: &FitOptions, seed: u64) -> Result<(Self, Vec<FitReport>)> {
        if data.transitions.len() < 2 {
            return Err(Error::EmptyDataset(format!("{} transitions; need at least 2", data.transitions.len())));
        }
        let inputs: Vec<Vec<f64>> = data.transitions.iter().map(Transition::input).collect();
        let fitted: Vec<(GpModel, FitReport)> = (0..N_STATES)
            .into_par_iter()
            .map(|d| {
                let targets: Vec<f64> = data
                    .transitions
                    .iter()
                    .map(|t| t.next.to_array()[d] - t.x.to_array()[d])
                    .collect();
                GpModel::fit(kernel, inputs.clone(), targets, opts, &mut stream(seed, Stage::GpFit, &[d as u64]))
            })
            .collect::<Result<_>>()?;
        let (models, reports) = fitted.into_iter().unzip();
        Ok((
            Self {
                models,
                variance_scale: 1.0,
            },
            reports,
        ))
    }

    /// Posterior mean and latent variance of the next state.
    pub fn predict(&self, x: &StateVec, u: &ControlVec) -> ([f64; N_STATES], [f64; N_STATES]) {
        let z = Transition { x: *x, u: *u, next: *x }.input();
        let xa = x.to_array();
        let mut mean = [0.0; N_STATES];
        let mut var = [0.0; N_STATES];
        for (d, gp) in self.models.iter().enumerate() {
            let (m, v) = gp.predict(&z);
            mean[d] = xa[d] + m;
            var[d] = v;
        }
        (mean, var)
    }

    /// Draws `x_{t+1} ~ N(μ, diag(σ²))`.
    pub fn sample(&self, x: &StateVec, u: &ControlVec, rng: &mut Stream) -> StateVec {
        let (mean, var) = self.predict(x, u);
        let mut next = [0.0; N_STATES];
        for d in 0..N_STATES {
            let z: f64 = StandardNormal.sample(rng);
            next[d] = mean[d] + (self.variance_scale * var[d]).sqrt() * z;
        }
        StateVec::from_array(next)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(
            path,
            &SurrogateFile {
                format_version: 1,
                variance_scale: self.variance_scale,
                models: self.models.iter().map(GpModel::to_file).collect(),
            },
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f: SurrogateFile = read_json(path)?;
        if f.format_version != 1 {
            return Err(Error::FormatVersion {
                expected: 1,
                found: f.format_version,
            });
        }
        if f.models.len() != N_STATES {
            return Err(Error::InvalidConfig(format!("surrogate has {} models, expected {N_STATES}", f.models.len())));
        }
        Ok(Self {
            models: f.models.into_iter().map(GpModel::from_file).collect::<Result<_>>()?,
            variance_scale: f.variance_scale,
        })
    }
}

/// The surrogate as a plant. States are measurement-like, so `observe`
/// is the identity.
#[derive(Clone, Debug)]
pub struct SurrogateEnv {
    pub cfg: EnvConfig,
    pub model: SurrogateModel,
}

impl SurrogateEnv {
    pub fn new(cfg: EnvConfig, model: SurrogateModel) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, model })
    }
}

impl Environment for SurrogateEnv {
    type Episode = ();

    fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn reset(&self, rng: &mut Stream) -> Result<((), StateVec)> {
        let (x0, _) = sample_episode_context(&self.cfg, rng)?;
        Ok(((), x0))
    }

    fn step(&self, _: &(), x: &StateVec, u: &ControlVec, interval: usize, rng: &mut Stream) -> Result<StateVec> {
        let next = self.model.sample(x, u, rng);
        if !next.is_finite() {
            return Err(Error::IntegrationFailure {
                interval,
                substep: 0,
                state: next.to_array(),
            });
        }
        Ok(next)
    }

    fn observe(&self, x: &StateVec, _: &mut Stream) -> StateVec {
        *x
    }
}
