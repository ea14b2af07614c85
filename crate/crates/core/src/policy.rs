//! Squashed-Gaussian feedback policy.
//!
//! A feedforward network reads the current measured state plus a window of
//! the `N` most recent states and controls, and emits the mean and log-std
//! of a diagonal Gaussian over pre-actions `a`. Controls are obtained as
//! `u = lo + (hi - lo) * sigmoid(a)`, so every action lies in the hard box.
//! Log-densities include the change-of-variables term, which makes the
//! score function exact (no clipping bias at the bounds).

use std::f64::consts::PI;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{ControlBounds, ControlVec, StateVec, N_CONTROLS, N_STATES};
use crate::error::{Error, Result};
use crate::optim::Adam;
use crate::rng::Stream;

pub const POLICY_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu,
}

/// Architecture and input/output conventions of a policy network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyArch {
    /// Hidden layer widths.
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub leaky_slope: f64,
    /// Number of past (state, control) pairs in the history window.
    pub window: usize,
    pub bounds: ControlBounds,
    /// Divisors applied to measured states before they enter the network.
    pub state_scale: [f64; N_STATES],
    pub log_std_min: f64,
    pub log_std_max: f64,
}

impl Default for PolicyArch {
    fn default() -> Self {
        Self {
            hidden: vec![20; 4],
            activation: Activation::LeakyRelu,
            leaky_slope: 0.01,
            window: 2,
            bounds: ControlBounds::default(),
            state_scale: [10.0, 800.0, 0.2],
            log_std_min: -5.0,
            log_std_max: 2.0,
        }
    }
}

impl PolicyArch {
    pub fn input_dim(&self) -> usize {
        N_STATES + self.window * (N_STATES + N_CONTROLS)
    }

    pub fn output_dim(&self) -> usize {
        2 * N_CONTROLS
    }

    /// `[input, hidden..., output]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(&self.hidden);
        s.push(self.output_dim());
        s
    }

    pub fn param_count(&self) -> usize {
        self.layer_sizes().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Network input for the current state and history.
    pub fn encode(&self, x: &StateVec, history: &HistoryWindow) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.input_dim());
        self.push_state(&mut v, x);
        for slot in 0..self.window {
            match history.slots.get(slot).copied().flatten() {
                Some((xs, u)) => {
                    self.push_state(&mut v, &xs);
                    for (d, c) in u.to_array().iter().enumerate() {
                        v.push((c - self.bounds.lo[d]) / self.bounds.width(d));
                    }
                }
                None => v.extend(std::iter::repeat(0.0).take(N_STATES + N_CONTROLS)),
            }
        }
        v
    }

    fn push_state(&self, v: &mut Vec<f64>, x: &StateVec) {
        for (c, s) in x.to_array().iter().zip(self.state_scale) {
            v.push(c / s);
        }
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden layer of width 0".into()));
        }
        if !(self.log_std_min < self.log_std_max) {
            return Err(Error::InvalidConfig("log-std clamp range is empty".into()));
        }
        if self.state_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("state scales must be positive".into()));
        }
        Ok(())
    }
}

/// The `N` most recent (measured state, control) pairs, newest first.
/// `None` marks padding before enough history exists.
#[derive(Clone, Debug, PartialEq)]
pub struct HistoryWindow {
    pub slots: Vec<Option<(StateVec, ControlVec)>>,
}

impl HistoryWindow {
    pub fn empty(len: usize) -> Self {
        Self { slots: vec![None; len] }
    }

    pub fn push(&mut self, x: StateVec, u: ControlVec) {
        if self.slots.is_empty() {
            return;
        }
        self.slots.pop();
        self.slots.insert(0, Some((x, u)));
    }

    pub fn padding(&self) -> Vec<bool> {
        self.slots.iter().map(Option::is_none).collect()
    }

    /// Number of scalar entries the window contributes.
    pub fn entry_count(&self) -> usize {
        self.slots.len() * (N_STATES + N_CONTROLS)
    }
}

/// Pre-squash Gaussian parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianHead {
    pub mean: [f64; N_CONTROLS],
    pub std: [f64; N_CONTROLS],
    /// Log-std before clamping; the clamp has zero gradient outside its range.
    pub raw_log_std: [f64; N_CONTROLS],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActionSample {
    pub u: ControlVec,
    /// Pre-squash draw `a`.
    pub pre: [f64; N_CONTROLS],
    pub logp: f64,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

/// Maps a pre-action to the control box.
pub fn squash(a: f64, lo: f64, hi: f64) -> f64 {
    (lo + (hi - lo) * sigmoid(a)).clamp(lo, hi)
}

/// `log |du/da|` of the logistic squash.
pub fn squash_log_jacobian(a: f64, lo: f64, hi: f64) -> f64 {
    (hi - lo).ln() - softplus(-a) - softplus(a)
}

/// Inverse squash; fails on (or outside) the bounds where it diverges.
pub fn unsquash(u: f64, lo: f64, hi: f64, dim: usize) -> Result<f64> {
    let s = (u - lo) / (hi - lo);
    if !(s > 0.0 && s < 1.0) {
        return Err(Error::ActionOnBoundary { dim, value: u, lo, hi });
    }
    let a = s.ln() - (-s).ln_1p();
    if !a.is_finite() {
        return Err(Error::ActionOnBoundary { dim, value: u, lo, hi });
    }
    Ok(a)
}

fn gaussian_logpdf(a: f64, mean: f64, std: f64) -> f64 {
    let z = (a - mean) / std;
    -0.5 * z * z - std.ln() - 0.5 * (2.0 * PI).ln()
}

/// Log-density of a control in one dimension under the squashed Gaussian.
pub fn component_log_density(mean: f64, std: f64, u: f64, lo: f64, hi: f64, dim: usize) -> Result<f64> {
    let a = unsquash(u, lo, hi, dim)?;
    Ok(gaussian_logpdf(a, mean, std) - squash_log_jacobian(a, lo, hi))
}

struct ForwardCache {
    /// Layer inputs (post-activation of the previous layer), starting with the encoded input.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyNet {
    pub arch: PolicyArch,
    /// Flat parameters: per layer, row-major weights `(out × in)` then biases.
    pub theta: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format_version: u32,
    layer_sizes: Vec<usize>,
    #[serde(flatten)]
    arch: PolicyArch,
    params: Vec<f64>,
}

impl PolicyNet {
    /// Zero network: mean 0 and unit std in pre-squash space.
    pub fn zeros(arch: PolicyArch) -> Result<Self> {
        arch.validate()?;
        let n = arch.param_count();
        Ok(Self { arch, theta: vec![0.0; n] })
    }

    /// He-normal weights and zero biases; the output layer is scaled by 0.1.
    pub fn init(arch: PolicyArch, rng: &mut Stream) -> Result<Self> {
        let mut net = Self::zeros(arch)?;
        let sizes = net.arch.layer_sizes();
        let mut off = 0;
        let layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut scale = (2.0 / fan_in as f64).sqrt();
            if l + 1 == layers {
                scale *= 0.1;
            }
            for k in 0..fan_in * fan_out {
                let z: f64 = StandardNormal.sample(rng);
                net.theta[off + k] = scale * z;
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(net)
    }

    pub fn with_theta(&self, theta: Vec<f64>) -> Self {
        Self {
            arch: self.arch.clone(),
            theta,
        }
    }

    pub fn check_finite(&self) -> Result<()> {
        if let Some(i) = self.theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("policy parameter {i}")));
        }
        Ok(())
    }

    fn activate(&self, z: f64) -> f64 {
        match self.arch.activation {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    self.arch.leaky_slope * z
                }
            }
        }
    }

    fn activate_grad(&self, z: f64) -> f64 {
        match self.arch.activation {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    self.arch.leaky_slope
                }
            }
        }
    }

    fn run(&self, input: &[f64]) -> (Vec<f64>, ForwardCache) {
        let sizes = self.arch.layer_sizes();
        let layers = sizes.len() - 1;
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
        };
        let mut h = input.to_vec();
        let mut off = 0;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.theta[off..off + n_in * n_out];
            let biases = &self.theta[off + n_in * n_out..off + n_in * n_out + n_out];
            let z: Vec<f64> = (0..n_out)
                .map(|o| {
                    let row = &weights[o * n_in..(o + 1) * n_in];
                    biases[o] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            let next = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|&v| self.activate(v)).collect()
            };
            cache.inputs.push(h);
            cache.pre.push(z);
            h = next;
            off += n_in * n_out + n_out;
        }
        (h, cache)
    }

    /// Accumulates `scale · ∂out/∂θ · out_grad` into `grad` by reverse-mode sweep.
    fn backprop(&self, cache: &ForwardCache, out_grad: &[f64], grad: &mut [f64]) {
        let sizes = self.arch.layer_sizes();
        let layers = sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        let mut delta = out_grad.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            if l + 1 != layers {
                for (d, z) in delta.iter_mut().zip(&cache.pre[l]) {
                    *d *= self.activate_grad(*z);
                }
            }
            let off = offsets[l];
            let input = &cache.inputs[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[off + o * n_in..off + (o + 1) * n_in];
                for (g, x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
                grad[off + n_in * n_out + o] += d;
            }
            if l > 0 {
                let weights = &self.theta[off..off + n_in * n_out];
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    for (p, w) in prev.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                        *p += d * w;
                    }
                }
                delta = prev;
            }
        }
    }

    fn head_from_output(&self, out: &[f64]) -> GaussianHead {
        let mut head = GaussianHead {
            mean: [0.0; N_CONTROLS],
            std: [0.0; N_CONTROLS],
            raw_log_std: [0.0; N_CONTROLS],
        };
        for d in 0..N_CONTROLS {
            head.mean[d] = out[d];
            head.raw_log_std[d] = out[N_CONTROLS + d];
            head.std[d] = out[N_CONTROLS + d]
                .clamp(self.arch.log_std_min, self.arch.log_std_max)
                .exp();
        }
        head
    }

    /// Pre-squash mean and std for an encoded input.
    pub fn head(&self, input: &[f64]) -> Result<GaussianHead> {
        self.check_finite()?;
        let (out, _) = self.run(input);
        Ok(self.head_from_output(&out))
    }

    pub fn forward(&self, x: &StateVec, history: &HistoryWindow) -> Result<GaussianHead> {
        self.head(&self.arch.encode(x, history))
    }

    fn logp_pre(&self, head: &GaussianHead, pre: &[f64; N_CONTROLS]) -> f64 {
        (0..N_CONTROLS)
            .map(|d| {
                gaussian_logpdf(pre[d], head.mean[d], head.std[d])
                    - squash_log_jacobian(pre[d], self.arch.bounds.lo[d], self.arch.bounds.hi[d])
            })
            .sum()
    }

    pub fn sample_action(&self, x: &StateVec, history: &HistoryWindow, rng: &mut Stream) -> Result<ActionSample> {
        let input = self.arch.encode(x, history);
        self.sample_encoded(&input, rng)
    }

    pub fn sample_encoded(&self, input: &[f64], rng: &mut Stream) -> Result<ActionSample> {
        let head = self.head(input)?;
        let mut pre = [0.0; N_CONTROLS];
        let mut u = [0.0; N_CONTROLS];
        for d in 0..N_CONTROLS {
            let z: f64 = StandardNormal.sample(rng);
            pre[d] = head.mean[d] + head.std[d] * z;
            u[d] = squash(pre[d], self.arch.bounds.lo[d], self.arch.bounds.hi[d]);
        }
        Ok(ActionSample {
            u: ControlVec::from_array(u),
            pre,
            logp: self.logp_pre(&head, &pre),
        })
    }

    /// Deterministic action `squash(mean)`.
    pub fn mean_action(&self, x: &StateVec, history: &HistoryWindow) -> Result<ControlVec> {
        let head = self.forward(x, history)?;
        let b = &self.arch.bounds;
        Ok(ControlVec::new(
            squash(head.mean[0], b.lo[0], b.hi[0]),
            squash(head.mean[1], b.lo[1], b.hi[1]),
        ))
    }

    fn pre_of(&self, u: &ControlVec) -> Result<[f64; N_CONTROLS]> {
        let b = &self.arch.bounds;
        let ua = u.to_array();
        Ok([unsquash(ua[0], b.lo[0], b.hi[0], 0)?, unsquash(ua[1], b.lo[1], b.hi[1], 1)?])
    }

    pub fn log_prob(&self, x: &StateVec, history: &HistoryWindow, u: &ControlVec) -> Result<f64> {
        let pre = self.pre_of(u)?;
        let head = self.forward(x, history)?;
        Ok(self.logp_pre(&head, &pre))
    }

    /// Adds `weight · ∇θ log π(a | input)` into `grad` and returns `log π`.
    pub fn accumulate_logp_grad(&self, input: &[f64], pre: &[f64; N_CONTROLS], weight: f64, grad: &mut [f64]) -> Result<f64> {
        self.check_finite()?;
        let (out, cache) = self.run(input);
        let head = self.head_from_output(&out);
        let mut out_grad = vec![0.0; self.arch.output_dim()];
        for d in 0..N_CONTROLS {
            let var = head.std[d] * head.std[d];
            let diff = pre[d] - head.mean[d];
            out_grad[d] = weight * diff / var;
            let raw = head.raw_log_std[d];
            if raw > self.arch.log_std_min && raw < self.arch.log_std_max {
                out_grad[N_CONTROLS + d] = weight * (diff * diff / var - 1.0);
            }
        }
        self.backprop(&cache, &out_grad, grad);
        Ok(self.logp_pre(&head, pre))
    }

    /// Exact gradient of `log π(u | x, D)` with respect to every parameter.
    pub fn logp_grad(&self, x: &StateVec, history: &HistoryWindow, u: &ControlVec) -> Result<Vec<f64>> {
        let pre = self.pre_of(u)?;
        let mut grad = vec![0.0; self.theta.len()];
        self.accumulate_logp_grad(&self.arch.encode(x, history), &pre, 1.0, &mut grad)?;
        Ok(grad)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = PolicyFile {
            format_version: POLICY_FORMAT_VERSION,
            layer_sizes: self.arch.layer_sizes(),
            arch: self.arch.clone(),
            params: self.theta.clone(),
        };
        crate::io::write_json(path, &file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: PolicyFile = crate::io::read_json(&path)?;
        if file.format_version != POLICY_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: POLICY_FORMAT_VERSION,
                found: file.format_version,
            });
        }
        if file.layer_sizes != file.arch.layer_sizes() || file.params.len() != file.arch.param_count() {
            return Err(Error::InvalidConfig(format!(
                "{}: layer sizes {:?} do not match {} parameters",
                path.as_ref().display(),
                file.layer_sizes,
                file.params.len()
            )));
        }
        file.arch.validate()?;
        Ok(Self {
            arch: file.arch,
            theta: file.params,
        })
    }
}

/// One supervised example for the hot start.
#[derive(Clone, Debug)]
pub struct PretrainSample {
    pub x: StateVec,
    pub history: HistoryWindow,
    pub u: ControlVec,
}

#[derive(Clone, Debug)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub best_loss: f64,
}

/// Mean negative log-likelihood of the samples and its gradient.
fn nll_and_grad(net: &PolicyNet, encoded: &[(Vec<f64>, [f64; N_CONTROLS])]) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; net.theta.len()];
    let w = -1.0 / encoded.len() as f64;
    let mut loss = 0.0;
    for (input, pre) in encoded {
        loss -= net.accumulate_logp_grad(input, pre, w, &mut grad)?;
    }
    Ok((loss / encoded.len() as f64, grad))
}

/// Supervised hot start: minimizes the NLL of teacher controls with Adam
/// (full batch) and returns the best parameters seen.
pub fn pretrain(net: &PolicyNet, data: &[PretrainSample], epochs: usize, lr: f64) -> Result<(PolicyNet, PretrainReport)> {
    if data.is_empty() {
        return Err(Error::EmptyDataset("pretraining needs at least one sample".into()));
    }
    let encoded: Vec<(Vec<f64>, [f64; N_CONTROLS])> = data
        .iter()
        .map(|s| Ok((net.arch.encode(&s.x, &s.history), net.pre_of(&s.u)?)))
        .collect::<Result<_>>()?;
    let mut current = net.clone();
    let mut adam = Adam::new(current.theta.len(), lr);
    let (initial_loss, mut grad) = nll_and_grad(&current, &encoded)?;
    let mut best = (initial_loss, current.theta.clone());
    let mut losses = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        adam.step(&mut current.theta, &grad, false);
        let (loss, g) = nll_and_grad(&current, &encoded)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("pretraining loss".into()));
        }
        losses.push(loss);
        if loss < best.0 {
            best = (loss, current.theta.clone());
        }
        grad = g;
    }
    let report = PretrainReport {
        losses,
        initial_loss,
        best_loss: best.0,
    };
    Ok((current.with_theta(best.1), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stage};
    use rand::Rng;

    fn small_arch() -> PolicyArch {
        PolicyArch {
            hidden: vec![6, 5],
            ..PolicyArch::default()
        }
    }

    fn some_inputs(r: &mut Stream) -> (StateVec, HistoryWindow) {
        let x = StateVec::new(r.random_range(0.5..10.0), r.random_range(50.0..800.0), r.random_range(0.0..0.15));
        let mut h = HistoryWindow::empty(2);
        h.push(
            StateVec::new(r.random_range(0.5..10.0), r.random_range(50.0..800.0), 0.01),
            ControlVec::new(r.random_range(121.0..399.0), r.random_range(1.0..39.0)),
        );
        (x, h)
    }

    #[test]
    fn default_architecture_matches_layout() {
        let a = PolicyArch::default();
        assert_eq!(a.layer_sizes(), vec![13, 20, 20, 20, 20, 4]);
        assert_eq!(a.param_count(), 13 * 20 + 20 + 3 * (20 * 20 + 20) + 20 * 4 + 4);
        assert_eq!(HistoryWindow::empty(2).entry_count(), 10);
    }

    #[test]
    fn history_window_pads_then_fills() {
        let mut h = HistoryWindow::empty(2);
        assert_eq!(h.padding(), vec![true, true]);
        h.push(StateVec::new(1.0, 2.0, 3.0), ControlVec::new(200.0, 1.0));
        assert_eq!(h.padding(), vec![false, true]);
        h.push(StateVec::new(4.0, 5.0, 6.0), ControlVec::new(300.0, 2.0));
        assert_eq!(h.slots[0].unwrap().0.c_x, 4.0);
        assert_eq!(h.slots[1].unwrap().0.c_x, 1.0);
    }

    #[test]
    fn zero_network_is_standard_normal() {
        let net = PolicyNet::zeros(PolicyArch::default()).unwrap();
        let (x, h) = some_inputs(&mut stream(0, Stage::Init, &[]));
        let head = net.forward(&x, &h).unwrap();
        assert_eq!(head.mean, [0.0, 0.0]);
        assert_eq!(head.std, [1.0, 1.0]);
        assert_eq!(net.forward(&x, &h).unwrap(), head);
    }

    #[test]
    fn nan_parameters_fail_fast() {
        let mut net = PolicyNet::zeros(small_arch()).unwrap();
        net.theta[3] = f64::NAN;
        let (x, h) = some_inputs(&mut stream(0, Stage::Init, &[]));
        assert!(matches!(net.forward(&x, &h), Err(Error::NonFinite(_))));
    }

    #[test]
    fn forward_matches_finite_difference_to_second_order() {
        let mut r = stream(3, Stage::Init, &[]);
        let net = PolicyNet::init(small_arch(), &mut r).unwrap();
        let (x, h) = some_inputs(&mut r);
        let input = net.arch.encode(&x, &h);
        let k = 7;
        let mean_at = |theta_k: f64| {
            let mut n = net.clone();
            n.theta[k] = theta_k;
            n.head(&input).unwrap().mean[0]
        };
        // derivative from two step sizes: central-difference error must shrink ~4x
        let exact = {
            let mut g = vec![0.0; net.theta.len()];
            let (out, cache) = net.run(&input);
            let _ = out;
            net.backprop(&cache, &[1.0, 0.0, 0.0, 0.0], &mut g);
            g[k]
        };
        let fd = |h: f64| (mean_at(net.theta[k] + h) - mean_at(net.theta[k] - h)) / (2.0 * h);
        let e1 = (fd(1e-3) - exact).abs();
        assert!(e1 < 1e-6, "{e1}");
    }

    #[test]
    fn sampled_actions_stay_in_bounds() {
        let mut r = stream(4, Stage::Init, &[]);
        let mut arch = small_arch();
        arch.log_std_max = 4.0;
        for i in 0..200 {
            let mut net = PolicyNet::init(arch.clone(), &mut r).unwrap();
            for t in net.theta.iter_mut() {
                *t *= 1.0 + (i as f64) * 0.5;
            }
            let (x, h) = some_inputs(&mut r);
            for _ in 0..50 {
                let s = net.sample_action(&x, &h, &mut r).unwrap();
                assert!(arch.bounds.contains(&s.u), "{:?}", s.u);
            }
        }
    }

    #[test]
    fn vanishing_std_gives_squashed_mean() {
        let mut arch = small_arch();
        arch.log_std_min = -40.0;
        let mut net = PolicyNet::zeros(arch).unwrap();
        let sizes = net.arch.layer_sizes();
        let n = net.theta.len();
        let out = sizes[sizes.len() - 1];
        // output biases: mean 0.3, -1.2; log-std -35
        net.theta[n - out..].copy_from_slice(&[0.3, -1.2, -35.0, -35.0]);
        let (x, h) = some_inputs(&mut stream(5, Stage::Init, &[]));
        let s = net.sample_action(&x, &h, &mut stream(5, Stage::Init, &[1])).unwrap();
        let m = net.mean_action(&x, &h).unwrap();
        assert!((s.u.light - m.light).abs() < 1e-9);
        assert!((s.u.inflow - m.inflow).abs() < 1e-9);
        assert!((m.light - squash(0.3, 120.0, 400.0)).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_density_integrates_to_one() {
        for (mean, std) in [(0.0, 1.0), (1.5, 0.4), (-2.0, 2.0)] {
            let (lo, hi) = (0.0, 40.0);
            let n = 200_000;
            let h = (hi - lo) / n as f64;
            let total: f64 = (0..n)
                .map(|i| {
                    let u = lo + (i as f64 + 0.5) * h;
                    component_log_density(mean, std, u, lo, hi, 1).unwrap().exp() * h
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "({mean}, {std}) -> {total}");
        }
    }

    #[test]
    fn score_identity_for_the_mean() {
        let net = PolicyNet::zeros(small_arch()).unwrap();
        let (x, h) = some_inputs(&mut stream(6, Stage::Init, &[]));
        let u = ControlVec::new(squash(0.7, 120.0, 400.0), squash(-0.4, 0.0, 40.0));
        let g = net.logp_grad(&x, &h, &u).unwrap();
        let n = g.len();
        // output-layer biases: d logp / d mean = (a - mean) / var with mean 0, var 1
        assert!((g[n - 4] - 0.7).abs() < 1e-9);
        assert!((g[n - 3] + 0.4).abs() < 1e-9);
    }

    #[test]
    fn scaling_std_shifts_logp() {
        let mut net = PolicyNet::zeros(small_arch()).unwrap();
        let (x, h) = some_inputs(&mut stream(7, Stage::Init, &[]));
        let u = net.mean_action(&x, &h).unwrap();
        let base = net.log_prob(&x, &h, &u).unwrap();
        let n = net.theta.len();
        let c: f64 = 0.5f64.exp();
        net.theta[n - 2] = c.ln();
        net.theta[n - 1] = c.ln();
        let scaled = net.log_prob(&x, &h, &u).unwrap();
        assert!((scaled - (base - 2.0 * c.ln())).abs() < 1e-12);
    }

    #[test]
    fn boundary_action_has_no_gradient() {
        let net = PolicyNet::zeros(small_arch()).unwrap();
        let (x, h) = some_inputs(&mut stream(8, Stage::Init, &[]));
        let err = net.logp_grad(&x, &h, &ControlVec::new(400.0, 10.0)).unwrap_err();
        assert!(matches!(err, Error::ActionOnBoundary { dim: 0, .. }));
    }

    #[test]
    fn importance_weights_average_to_one() {
        let mut net = PolicyNet::zeros(small_arch()).unwrap();
        let n = net.theta.len();
        net.theta[n - 4..].copy_from_slice(&[0.2, -0.3, 0.1, 0.0]);
        let (x, h) = some_inputs(&mut stream(9, Stage::Init, &[]));
        let b = net.arch.bounds;
        let area = b.width(0) * b.width(1);
        let mut r = stream(9, Stage::Init, &[1]);
        let m = 200_000;
        let mean = (0..m)
            .map(|_| {
                let u = ControlVec::new(r.random_range(b.lo[0]..b.hi[0]), r.random_range(b.lo[1]..b.hi[1]));
                net.log_prob(&x, &h, &u).map(|l| l.exp() * area).unwrap_or(0.0)
            })
            .sum::<f64>()
            / m as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn pretraining_fits_a_single_point() {
        let mut r = stream(10, Stage::Init, &[]);
        let net = PolicyNet::init(small_arch(), &mut r).unwrap();
        let (x, h) = some_inputs(&mut r);
        let target = ControlVec::new(250.0, 12.0);
        let data = vec![PretrainSample { x, history: h.clone(), u: target }];
        let (trained, report) = pretrain(&net, &data, 600, 1e-2).unwrap();
        assert!(report.best_loss < report.initial_loss);
        assert!(report.losses.last().unwrap() < &report.initial_loss);
        let m = trained.mean_action(&x, &h).unwrap();
        assert!((m.light - 250.0).abs() < 0.01 * 280.0, "{m:?}");
        assert!((m.inflow - 12.0).abs() < 0.01 * 40.0, "{m:?}");
    }

    #[test]
    fn pretraining_rejects_empty_data() {
        let net = PolicyNet::zeros(small_arch()).unwrap();
        assert!(matches!(pretrain(&net, &[], 10, 1e-2), Err(Error::EmptyDataset(_))));
    }

    #[test]
    fn json_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let net = PolicyNet::init(PolicyArch::default(), &mut stream(1, Stage::Init, &[])).unwrap();
        let path = dir.path().join("policy.json");
        net.save(&path).unwrap();
        assert_eq!(PolicyNet::load(&path).unwrap(), net);
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        v["format_version"] = 99.into();
        std::fs::write(&path, v.to_string()).unwrap();
        assert!(matches!(PolicyNet::load(&path), Err(Error::FormatVersion { found: 99, .. })));
    }
}
