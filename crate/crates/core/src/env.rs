//! Fed-batch photobioreactor with Monod kinetics.
//!
//! Three states (biomass `c_x`, nitrate `c_N`, product `c_q`) driven by
//! light intensity and nitrate inflow. One control interval is integrated
//! with fixed-step RK4; disturbances enter once per interval and measurement
//! noise is applied by [`observe`].

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

pub const N_STATES: usize = 3;
pub const N_CONTROLS: usize = 2;
pub const N_CONSTRAINTS: usize = 2;

const MAX_REJECTIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVec {
    /// Biomass concentration (g/L).
    pub c_x: f64,
    /// Nitrate concentration (mg/L).
    pub c_n: f64,
    /// Product concentration (g/L).
    pub c_q: f64,
}

impl StateVec {
    pub fn new(c_x: f64, c_n: f64, c_q: f64) -> Self {
        Self { c_x, c_n, c_q }
    }

    pub fn to_array(self) -> [f64; N_STATES] {
        [self.c_x, self.c_n, self.c_q]
    }

    pub fn from_array(a: [f64; N_STATES]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlVec {
    /// Light intensity (µmol/m²/s).
    pub light: f64,
    /// Nitrate inflow rate (mg/L/h).
    pub inflow: f64,
}

impl ControlVec {
    pub fn new(light: f64, inflow: f64) -> Self {
        Self { light, inflow }
    }

    pub fn to_array(self) -> [f64; N_CONTROLS] {
        [self.light, self.inflow]
    }

    pub fn from_array(a: [f64; N_CONTROLS]) -> Self {
        Self::new(a[0], a[1])
    }
}

/// Hard box on the controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lo: [f64; N_CONTROLS],
    pub hi: [f64; N_CONTROLS],
}

impl Default for ControlBounds {
    fn default() -> Self {
        Self {
            lo: [120.0, 0.0],
            hi: [400.0, 40.0],
        }
    }
}

impl ControlBounds {
    pub fn contains(&self, u: &ControlVec) -> bool {
        u.to_array()
            .iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    pub fn width(&self, dim: usize) -> f64 {
        self.hi[dim] - self.lo[dim]
    }
}

/// Monod-kinetics coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KineticParams {
    pub u_m: f64,
    pub u_d: f64,
    pub y_nx: f64,
    pub k_m: f64,
    pub k_d: f64,
    pub k_s: f64,
    pub k_i: f64,
    pub k_n: f64,
    pub k_sq: f64,
    pub k_iq: f64,
    pub k_nq: f64,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            u_m: 0.0572,
            u_d: 0.0,
            y_nx: 504.5,
            k_m: 0.00016,
            k_d: 0.281,
            k_s: 178.9,
            k_i: 447.1,
            k_n: 393.1,
            k_sq: 23.51,
            k_iq: 800.0,
            k_nq: 16.89,
        }
    }
}

impl KineticParams {
    fn named(&self) -> [(&'static str, f64); 11] {
        [
            ("u_m", self.u_m),
            ("u_d", self.u_d),
            ("y_nx", self.y_nx),
            ("k_m", self.k_m),
            ("k_d", self.k_d),
            ("k_s", self.k_s),
            ("k_i", self.k_i),
            ("k_n", self.k_n),
            ("k_sq", self.k_sq),
            ("k_iq", self.k_iq),
            ("k_nq", self.k_nq),
        ]
    }

    /// Rates must be non-negative; saturation constants strictly positive.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.named() {
            let strict = !matches!(name, "u_d");
            if !v.is_finite() || v < 0.0 || (strict && v == 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "kinetic parameter {name} = {v} must be {}",
                    if strict { "> 0" } else { ">= 0" }
                )));
            }
        }
        Ok(())
    }

    /// Right-hand side of the mass balances.
    pub fn derivative(&self, x: &[f64; N_STATES], u: &ControlVec) -> [f64; N_STATES] {
        let [c_x, c_n, c_q] = *x;
        let i = u.light;
        let light_growth = self.u_m * i / (i + self.k_s + i * i / self.k_i);
        let monod = c_x * c_n / (c_n + self.k_n);
        let light_product = self.k_m * i / (i + self.k_sq + i * i / self.k_iq);
        [
            light_growth * monod - self.u_d * c_x,
            -self.y_nx * light_growth * monod + u.inflow,
            light_product * c_x - self.k_d * c_q / (c_n + self.k_nq),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalParam {
    pub mean: f64,
    pub std: f64,
}

impl NormalParam {
    pub fn fixed(mean: f64) -> Self {
        Self { mean, std: 0.0 }
    }

    pub fn relative(mean: f64, fraction: f64) -> Self {
        Self {
            mean,
            std: mean * fraction,
        }
    }
}

/// Kinetic coefficients as normal distributions. Zero std means fixed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDists {
    pub u_m: NormalParam,
    pub u_d: NormalParam,
    pub y_nx: NormalParam,
    pub k_m: NormalParam,
    pub k_d: NormalParam,
    pub k_s: NormalParam,
    pub k_i: NormalParam,
    pub k_n: NormalParam,
    pub k_sq: NormalParam,
    pub k_iq: NormalParam,
    pub k_nq: NormalParam,
}

impl ParamDists {
    pub fn fixed(p: KineticParams) -> Self {
        let f = NormalParam::fixed;
        Self {
            u_m: f(p.u_m),
            u_d: f(p.u_d),
            y_nx: f(p.y_nx),
            k_m: f(p.k_m),
            k_d: f(p.k_d),
            k_s: f(p.k_s),
            k_i: f(p.k_i),
            k_n: f(p.k_n),
            k_sq: f(p.k_sq),
            k_iq: f(p.k_iq),
            k_nq: f(p.k_nq),
        }
    }

    pub fn means(&self) -> KineticParams {
        KineticParams {
            u_m: self.u_m.mean,
            u_d: self.u_d.mean,
            y_nx: self.y_nx.mean,
            k_m: self.k_m.mean,
            k_d: self.k_d.mean,
            k_s: self.k_s.mean,
            k_i: self.k_i.mean,
            k_n: self.k_n.mean,
            k_sq: self.k_sq.mean,
            k_iq: self.k_iq.mean,
            k_nq: self.k_nq.mean,
        }
    }

    fn fields_mut(&mut self) -> [&mut NormalParam; 11] {
        [
            &mut self.u_m,
            &mut self.u_d,
            &mut self.y_nx,
            &mut self.k_m,
            &mut self.k_d,
            &mut self.k_s,
            &mut self.k_i,
            &mut self.k_n,
            &mut self.k_sq,
            &mut self.k_iq,
            &mut self.k_nq,
        ]
    }

    fn fields(&self) -> [&NormalParam; 11] {
        [
            &self.u_m,
            &self.u_d,
            &self.y_nx,
            &self.k_m,
            &self.k_d,
            &self.k_s,
            &self.k_i,
            &self.k_n,
            &self.k_sq,
            &self.k_iq,
            &self.k_nq,
        ]
    }

    /// Zeroes every standard deviation.
    pub fn deterministic(mut self) -> Self {
        for f in self.fields_mut() {
            f.std = 0.0;
        }
        self
    }
}

impl Default for ParamDists {
    /// Nominal kinetics with 10% uncertainty on `k_s`, `k_i` and `K_N`.
    fn default() -> Self {
        let p = KineticParams::default();
        Self {
            k_s: NormalParam::relative(p.k_s, 0.1),
            k_i: NormalParam::relative(p.k_i, 0.1),
            k_n: NormalParam::relative(p.k_n, 0.1),
            ..Self::fixed(p)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Number of control intervals.
    pub horizon: usize,
    /// Interval length (h).
    pub dt: f64,
    /// Mean of `[c_x(0), c_N(0)]`; `c_q(0)` is always zero.
    pub init_mean: [f64; 2],
    /// Diagonal covariance of `[c_x(0), c_N(0)]`.
    pub init_cov: [f64; 2],
    pub params: ParamDists,
    /// Diagonal disturbance covariance, applied once per interval.
    pub disturbance_cov: [f64; N_STATES],
    /// Diagonal measurement-noise covariance.
    pub measurement_cov: [f64; N_STATES],
    pub substeps: usize,
    pub bounds: ControlBounds,
    /// Diagonal weights of the control-move penalty.
    pub move_weights: [f64; N_CONTROLS],
    /// Biomass floor used when evaluating the product/biomass ratio constraint.
    pub c_x_floor: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            horizon: 12,
            dt: 20.0,
            init_mean: [1.0, 150.0],
            init_cov: [1e-3, 22.5],
            params: ParamDists::default(),
            disturbance_cov: [0.0; N_STATES],
            measurement_cov: [0.0; N_STATES],
            substeps: 10,
            bounds: ControlBounds::default(),
            move_weights: [3.125e-8, 3.125e-6],
            c_x_floor: 1e-9,
            seed: 0,
        }
    }
}

impl EnvConfig {
    /// Disturbance and measurement noise of the data-driven case.
    pub fn noisy() -> Self {
        Self {
            disturbance_cov: [4e-4, 0.1, 1e-8],
            measurement_cov: [4e-5, 0.01, 1e-9],
            params: ParamDists::default().deterministic(),
            ..Self::default()
        }
    }

    /// All noise and uncertainty removed: a pure ODE.
    pub fn deterministic(mut self) -> Self {
        self.init_cov = [0.0; 2];
        self.params = self.params.deterministic();
        self.disturbance_cov = [0.0; N_STATES];
        self.measurement_cov = [0.0; N_STATES];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.horizon < 1 {
            return bad("horizon must be >= 1".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.substeps < 1 {
            return bad("substeps must be >= 1".into());
        }
        let diag_ok = |v: &[f64]| v.iter().all(|c| *c >= 0.0 && c.is_finite());
        if !diag_ok(&self.init_cov) || !diag_ok(&self.disturbance_cov) || !diag_ok(&self.measurement_cov) {
            return bad("covariance diagonals must be finite and >= 0".into());
        }
        for f in self.params.fields() {
            if !(f.std >= 0.0 && f.std.is_finite() && f.mean.is_finite()) {
                return bad(format!("parameter distribution {f:?} is invalid"));
            }
        }
        self.params.means().validate()?;
        for d in 0..N_CONTROLS {
            if !(self.bounds.lo[d] < self.bounds.hi[d]) {
                return bad(format!("control bound {d} is empty"));
            }
        }
        if !(self.c_x_floor > 0.0) {
            return bad("c_x_floor must be positive".into());
        }
        Ok(())
    }
}

fn normal_draw(rng: &mut Stream, mean: f64, var: f64) -> f64 {
    if var == 0.0 {
        mean
    } else {
        let z: f64 = StandardNormal.sample(rng);
        mean + var.sqrt() * z
    }
}

/// Draws the initial state and the kinetic coefficients of one episode.
pub fn sample_episode_context(cfg: &EnvConfig, rng: &mut Stream) -> Result<(StateVec, KineticParams)> {
    let x0 = StateVec::new(
        normal_draw(rng, cfg.init_mean[0], cfg.init_cov[0]),
        normal_draw(rng, cfg.init_mean[1], cfg.init_cov[1]),
        0.0,
    );
    let mut dists = cfg.params;
    let mut values = [0.0; 11];
    for (slot, dist) in values.iter_mut().zip(dists.fields_mut()) {
        *slot = if dist.std == 0.0 {
            dist.mean
        } else {
            let normal = Normal::new(dist.mean, dist.std)
                .map_err(|e| Error::InvalidConfig(format!("parameter distribution: {e}")))?;
            let mut accepted = None;
            for _ in 0..MAX_REJECTIONS {
                let v = normal.sample(rng);
                if v > 0.0 {
                    accepted = Some(v);
                    break;
                }
            }
            accepted.ok_or_else(|| {
                Error::DegenerateConfig(format!(
                    "N({}, {}) produced no positive draw in {MAX_REJECTIONS} tries",
                    dist.mean, dist.std
                ))
            })?
        };
    }
    let [u_m, u_d, y_nx, k_m, k_d, k_s, k_i, k_n, k_sq, k_iq, k_nq] = values;
    let params = KineticParams {
        u_m,
        u_d,
        y_nx,
        k_m,
        k_d,
        k_s,
        k_i,
        k_n,
        k_sq,
        k_iq,
        k_nq,
    };
    Ok((x0, params))
}

/// One classic RK4 step of `dy/dt = f(y)`.
pub fn rk4_step<const N: usize>(f: impl Fn(&[f64; N]) -> [f64; N], y: &[f64; N], h: f64) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *a;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(y);
    let k2 = f(&axpy(y, &k1, h / 2.0));
    let k3 = f(&axpy(y, &k2, h / 2.0));
    let k4 = f(&axpy(y, &k3, h));
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates an autonomous system over `span` with `substeps` equal RK4 steps.
///
/// Stops at the first non-finite substep and reports its index.
pub fn rk4_integrate<const N: usize>(
    f: impl Fn(&[f64; N]) -> [f64; N],
    y0: [f64; N],
    span: f64,
    substeps: usize,
) -> std::result::Result<[f64; N], (usize, [f64; N])> {
    let h = span / substeps as f64;
    let mut y = y0;
    for k in 0..substeps {
        y = rk4_step(&f, &y, h);
        if y.iter().any(|v| !v.is_finite()) {
            return Err((k, y));
        }
    }
    Ok(y)
}

/// Advances the true state across one control interval.
///
/// `interval` only labels integration failures.
pub fn step(
    x: &StateVec,
    u: &ControlVec,
    p: &KineticParams,
    cfg: &EnvConfig,
    interval: usize,
    rng: &mut Stream,
) -> Result<StateVec> {
    let y = rk4_integrate(|y| p.derivative(y, u), x.to_array(), cfg.dt, cfg.substeps).map_err(
        |(substep, state)| Error::IntegrationFailure {
            interval,
            substep,
            state,
        },
    )?;
    let mut next = y;
    for (i, v) in next.iter_mut().enumerate() {
        *v = normal_draw(rng, *v, cfg.disturbance_cov[i]);
    }
    let next = StateVec::from_array(next);
    if !next.is_finite() {
        return Err(Error::IntegrationFailure {
            interval,
            substep: cfg.substeps,
            state: next.to_array(),
        });
    }
    Ok(next)
}

/// Measured state: `x + v`, `v ~ N(0, Σ_v)`.
pub fn observe(x: &StateVec, cfg: &EnvConfig, rng: &mut Stream) -> StateVec {
    let mut y = x.to_array();
    for (i, v) in y.iter_mut().enumerate() {
        *v = normal_draw(rng, *v, cfg.measurement_cov[i]);
    }
    StateVec::from_array(y)
}

/// Normalized path constraints `[c_N/800 − 1, c_q/(0.011 c_x) − 1]`.
///
/// The second flag is set when `c_x` fell below `floor` and the ratio was
/// evaluated at the floor instead.
pub fn constraints(x: &StateVec, floor: f64) -> ([f64; N_CONSTRAINTS], bool) {
    let floored = x.c_x <= floor;
    let c_x = if floored { floor } else { x.c_x };
    ([x.c_n / 800.0 - 1.0, x.c_q / (0.011 * c_x) - 1.0], floored)
}

/// Weighted quadratic control-move penalty `Δuᵀ r Δu`.
pub fn move_penalty(prev: &ControlVec, u: &ControlVec, weights: &[f64; N_CONTROLS]) -> f64 {
    let du = [u.light - prev.light, u.inflow - prev.inflow];
    weights[0] * du[0] * du[0] + weights[1] * du[1] * du[1]
}

/// One closed-loop rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// True states `x_0..x_T`.
    pub states: Vec<StateVec>,
    /// Applied controls `u_0..u_{T-1}`.
    pub controls: Vec<ControlVec>,
    /// `R_0..R_T`; the last entry is the terminal product reward.
    pub rewards: Vec<f64>,
    /// `g_{j,t}` for `t = 1..T`, stored at index `t - 1`.
    pub constraints: Vec<[f64; N_CONSTRAINTS]>,
    /// Some constraint was evaluated at the biomass floor.
    pub floored: bool,
}

impl Trajectory {
    pub fn with_initial_state(x0: StateVec) -> Self {
        Self {
            states: vec![x0],
            controls: Vec::new(),
            rewards: Vec::new(),
            constraints: Vec::new(),
            floored: false,
        }
    }

    pub fn horizon(&self) -> usize {
        self.controls.len()
    }

    /// Appends `u_t` and `x_{t+1}` and the step reward `R_t`.
    pub fn push(&mut self, u: ControlVec, next: StateVec, cfg: &EnvConfig) {
        let prev = self.controls.last().copied().unwrap_or(u);
        self.rewards.push(-move_penalty(&prev, &u, &cfg.move_weights));
        self.controls.push(u);
        let (g, floored) = constraints(&next, cfg.c_x_floor);
        self.floored |= floored;
        self.constraints.push(g);
        self.states.push(next);
    }

    /// Closes the episode with the terminal reward `R_T = c_q(T)`.
    pub fn finish(&mut self) {
        let last = self.states.last().expect("trajectory has an initial state");
        self.rewards.push(last.c_q);
    }

    /// Undiscounted return `J = Σ R_t`.
    pub fn ret(&self) -> f64 {
        self.rewards.iter().sum()
    }

    pub fn final_product(&self) -> f64 {
        self.states.last().map(|s| s.c_q).unwrap_or(0.0)
    }

    pub fn check_lengths(&self) -> bool {
        let t = self.controls.len();
        self.states.len() == t + 1 && self.rewards.len() == t + 1 && self.constraints.len() == t
    }

    pub const CSV_HEADER: [&'static str; 9] = ["t", "c_x", "c_N", "c_q", "I", "F_N", "R", "g1", "g2"];

    /// Rows `t = 0..T`; controls are blank at `T`, constraints blank at `0`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let ctx = "writing trajectory csv";
        out.write_record(Self::CSV_HEADER).map_err(|e| Error::csv(ctx, e))?;
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string(), x.c_x.to_string(), x.c_n.to_string(), x.c_q.to_string()];
            match self.controls.get(t) {
                Some(u) => row.extend([u.light.to_string(), u.inflow.to_string()]),
                None => row.extend([String::new(), String::new()]),
            }
            row.push(self.rewards.get(t).map(|r| r.to_string()).unwrap_or_default());
            match t.checked_sub(1).and_then(|i| self.constraints.get(i)) {
                Some(g) => row.extend([g[0].to_string(), g[1].to_string()]),
                None => row.extend([String::new(), String::new()]),
            }
            out.write_record(&row).map_err(|e| Error::csv(ctx, e))?;
        }
        out.flush().map_err(|e| Error::io("trajectory csv", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, c_x_floor: f64) -> Result<Self> {
        let ctx = "reading trajectory csv";
        let mut rdr = csv::Reader::from_reader(r);
        let parse = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::InvalidConfig(format!("{ctx}: bad number {s:?}: {e}")))
            }
        };
        let mut traj = Trajectory {
            states: vec![],
            controls: vec![],
            rewards: vec![],
            constraints: vec![],
            floored: false,
        };
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::csv(ctx, e))?;
            let f: Vec<Option<f64>> = rec.iter().map(parse).collect::<Result<_>>()?;
            if f.len() != 9 {
                return Err(Error::InvalidConfig(format!("{ctx}: expected 9 columns, got {}", f.len())));
            }
            let need = |v: Option<f64>| v.ok_or_else(|| Error::InvalidConfig(format!("{ctx}: missing value")));
            let x = StateVec::new(need(f[1])?, need(f[2])?, need(f[3])?);
            traj.states.push(x);
            if let (Some(i), Some(fnv)) = (f[4], f[5]) {
                traj.controls.push(ControlVec::new(i, fnv));
            }
            if let Some(r) = f[6] {
                traj.rewards.push(r);
            }
            if let (Some(g1), Some(g2)) = (f[7], f[8]) {
                traj.constraints.push([g1, g2]);
                traj.floored |= x.c_x <= c_x_floor;
            }
        }
        Ok(traj)
    }
}

/// A stochastic plant the policy interacts with.
pub trait Environment: Sync {
    /// Per-episode context fixed at reset (e.g. sampled kinetic parameters).
    type Episode: Send;

    fn config(&self) -> &EnvConfig;

    fn reset(&self, rng: &mut Stream) -> Result<(Self::Episode, StateVec)>;

    fn step(
        &self,
        episode: &Self::Episode,
        x: &StateVec,
        u: &ControlVec,
        interval: usize,
        rng: &mut Stream,
    ) -> Result<StateVec>;

    /// Measurement handed to the policy.
    fn observe(&self, x: &StateVec, rng: &mut Stream) -> StateVec;

    fn horizon(&self) -> usize {
        self.config().horizon
    }
}

/// The mechanistic plant.
#[derive(Clone, Debug)]
pub struct OdeEnv {
    pub cfg: EnvConfig,
}

impl OdeEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Environment for OdeEnv {
    type Episode = KineticParams;

    fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    fn reset(&self, rng: &mut Stream) -> Result<(KineticParams, StateVec)> {
        let (x0, p) = sample_episode_context(&self.cfg, rng)?;
        Ok((p, x0))
    }

    fn step(&self, p: &KineticParams, x: &StateVec, u: &ControlVec, interval: usize, rng: &mut Stream) -> Result<StateVec> {
        step(x, u, p, &self.cfg, interval, rng)
    }

    fn observe(&self, x: &StateVec, rng: &mut Stream) -> StateVec {
        observe(x, &self.cfg, rng)
    }
}

/// Rolls out a fixed open-loop control sequence (used for data generation).
pub fn open_loop<E: Environment>(env: &E, x0_override: Option<StateVec>, controls: &[ControlVec], rng: &mut Stream) -> Result<(Trajectory, Vec<StateVec>)> {
    let (ep, mut x) = env.reset(rng)?;
    if let Some(x0) = x0_override {
        x = x0;
    }
    let mut traj = Trajectory::with_initial_state(x);
    let mut measured = vec![env.observe(&x, rng)];
    for (t, u) in controls.iter().enumerate() {
        let next = env.step(&ep, &x, u, t, rng)?;
        traj.push(*u, next, env.config());
        measured.push(env.observe(&next, rng));
        x = next;
    }
    traj.finish();
    Ok((traj, measured))
}

/// Uniform draw inside the control box, used by tests and heuristics.
pub fn random_control(bounds: &ControlBounds, rng: &mut Stream) -> ControlVec {
    ControlVec::new(
        rng.random_range(bounds.lo[0]..=bounds.hi[0]),
        rng.random_range(bounds.lo[1]..=bounds.hi[1]),
    )
}
