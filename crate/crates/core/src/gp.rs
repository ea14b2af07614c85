//! Gaussian process regression with a zero-mean prior on normalized data.
//!
//! Inputs are standardized per dimension and targets per model; the kernel
//! is ARD Matérn-3/2 or squared-exponential. Hyperparameters are fitted by
//! maximizing the log marginal likelihood with multistart Nelder–Mead in
//! log space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::nelder_mead;
use crate::rng::Stream;

const MAX_JITTER: f64 = 1e-6;
const LOG_LENGTHSCALE: (f64, f64) = (-4.6, 6.9);
const LOG_SIGNAL: (f64, f64) = (-6.9, 4.6);
const LOG_NOISE: (f64, f64) = (-18.4, 2.3);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    Matern32,
    SquaredExponential,
}

impl Kernel {
    /// Covariance as a function of the scaled distance `r`.
    pub fn eval(self, r: f64, signal_var: f64) -> f64 {
        match self {
            Kernel::Matern32 => {
                let s = 3f64.sqrt() * r;
                signal_var * (1.0 + s) * (-s).exp()
            }
            Kernel::SquaredExponential => signal_var * (-0.5 * r * r).exp(),
        }
    }
}

/// Hyperparameters in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub lengthscales: Vec<f64>,
    pub signal_var: f64,
    pub noise_var: f64,
}

impl Hyperparameters {
    pub fn unit(dim: usize) -> Self {
        Self {
            lengthscales: vec![1.0; dim],
            signal_var: 1.0,
            noise_var: 0.01,
        }
    }

    fn to_log(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.lengthscales.iter().map(|l| l.ln()).collect();
        v.push(self.signal_var.ln());
        v.push(self.noise_var.ln());
        v
    }

    fn from_log(v: &[f64], fixed_noise: Option<f64>) -> Self {
        let d = v.len() - 2;
        Self {
            lengthscales: v[..d].iter().map(|x| x.exp()).collect(),
            signal_var: v[d].exp(),
            noise_var: fixed_noise.unwrap_or_else(|| v[d + 1].exp()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub output_mean: f64,
    pub output_std: f64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    // constant columns keep unit scale
    (mean, if std > 1e-12 * (1.0 + mean.abs()) { std } else { 1.0 })
}

impl Normalization {
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let dim = inputs[0].len();
        let (input_mean, input_std) = (0..dim).map(|d| mean_std(inputs.iter().map(move |z| z[d]))).unzip();
        let (output_mean, output_std) = mean_std(targets.iter().copied());
        Self {
            input_mean,
            input_std,
            output_mean,
            output_std,
        }
    }

    pub fn input(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.input_mean.iter().zip(&self.input_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Clone, Debug)]
struct Factorization {
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

/// A fitted single-output GP.
#[derive(Clone, Debug)]
pub struct GpModel {
    pub kernel: Kernel,
    pub hyper: Hyperparameters,
    pub norm: Normalization,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    scaled: Vec<Vec<f64>>,
    factor: Factorization,
}

#[derive(Serialize, Deserialize)]
pub struct GpModelFile {
    pub kernel: Kernel,
    pub hyper: Hyperparameters,
    pub norm: Normalization,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub restarts: usize,
    pub iterations: usize,
    /// Keep the (normalized) noise variance fixed at this value.
    pub fixed_noise: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 5,
            iterations: 200,
            fixed_noise: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub initial_log_likelihood: f64,
    pub log_likelihood: f64,
}

fn scaled_distance(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn covariance(kernel: Kernel, hyper: &Hyperparameters, z: &[Vec<f64>]) -> DMatrix<f64> {
    let n = z.len();
    DMatrix::from_fn(n, n, |i, j| {
        kernel.eval(scaled_distance(&z[i], &z[j], &hyper.lengthscales), hyper.signal_var)
            + if i == j { hyper.noise_var } else { 0.0 }
    })
}

fn factorize(kernel: Kernel, hyper: &Hyperparameters, z: &[Vec<f64>], y: &DVector<f64>) -> Result<Factorization> {
    let k = covariance(kernel, hyper, z);
    let mut jitter = 0.0;
    loop {
        let mut kj = k.clone();
        for i in 0..kj.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(chol) = kj.cholesky() {
            let alpha = chol.solve(y);
            if alpha.iter().all(|v| v.is_finite()) {
                return Ok(Factorization { chol, alpha, jitter });
            }
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
        if jitter > MAX_JITTER * 1.0001 {
            return Err(Error::IllConditioned(format!(
                "covariance of {} points is not positive definite even with jitter {MAX_JITTER}",
                z.len()
            )));
        }
    }
}

fn log_likelihood(f: &Factorization, y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let log_det: f64 = f.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
    -0.5 * y.dot(&f.alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

impl GpModel {
    /// Builds a model with given hyperparameters (no fitting).
    pub fn new(kernel: Kernel, hyper: Hyperparameters, inputs: Vec<Vec<f64>>, targets: Vec<f64>) -> Result<Self> {
        let norm = Normalization::fit(&inputs, &targets);
        Self::with_normalization(kernel, hyper, norm, inputs, targets)
    }

    pub fn with_normalization(
        kernel: Kernel,
        hyper: Hyperparameters,
        norm: Normalization,
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
    ) -> Result<Self> {
        validate_data(&inputs, &targets)?;
        if hyper.lengthscales.len() != inputs[0].len() {
            return Err(Error::InvalidConfig(format!(
                "{} lengthscales for {}-dimensional inputs",
                hyper.lengthscales.len(),
                inputs[0].len()
            )));
        }
        let scaled: Vec<Vec<f64>> = inputs.iter().map(|z| norm.input(z)).collect();
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - norm.output_mean) / norm.output_std));
        let factor = factorize(kernel, &hyper, &scaled, &y)?;
        Ok(Self {
            kernel,
            hyper,
            norm,
            inputs,
            targets,
            scaled,
            factor,
        })
    }

    /// Maximum-likelihood fit. The first start is [`Hyperparameters::unit`]
    /// (or the fixed noise), further starts are random in log space.
    pub fn fit(kernel: Kernel, inputs: Vec<Vec<f64>>, targets: Vec<f64>, opts: &FitOptions, rng: &mut Stream) -> Result<(Self, FitReport)> {
        validate_data(&inputs, &targets)?;
        if inputs.len() < 2 {
            return Err(Error::EmptyDataset("a GP fit needs at least two points".into()));
        }
        let norm = Normalization::fit(&inputs, &targets);
        let scaled: Vec<Vec<f64>> = inputs.iter().map(|z| norm.input(z)).collect();
        let y = DVector::from_iterator(targets.len(), targets.iter().map(|t| (t - norm.output_mean) / norm.output_std));
        let dim = inputs[0].len();

        let objective = |v: &[f64]| -> f64 {
            let h = Hyperparameters::from_log(v, opts.fixed_noise);
            match factorize(kernel, &h, &scaled, &y) {
                Ok(f) => -log_likelihood(&f, &y),
                Err(_) => f64::INFINITY,
            }
        };
        let mut lo = vec![LOG_LENGTHSCALE.0; dim];
        let mut hi = vec![LOG_LENGTHSCALE.1; dim];
        lo.extend([LOG_SIGNAL.0, LOG_NOISE.0]);
        hi.extend([LOG_SIGNAL.1, LOG_NOISE.1]);
        if let Some(noise) = opts.fixed_noise {
            lo[dim + 1] = noise.ln();
            hi[dim + 1] = noise.ln();
        }

        let mut initial = Hyperparameters::unit(dim);
        if let Some(noise) = opts.fixed_noise {
            initial.noise_var = noise;
        }
        let initial_log = initial.to_log();
        let initial_ll = -objective(&initial_log);

        let mut best = (objective(&initial_log), initial_log.clone());
        for restart in 0..opts.restarts.max(1) {
            let start = if restart == 0 {
                initial_log.clone()
            } else {
                let mut s: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..2.5)).collect();
                s.push(rng.random_range(-1.5..1.5));
                s.push(match opts.fixed_noise {
                    Some(n) => n.ln(),
                    None => rng.random_range(-9.0..-0.5),
                });
                s
            };
            let r = nelder_mead(&objective, &start, 0.5, opts.iterations, Some((&lo, &hi)));
            if r.f < best.0 {
                best = (r.f, r.x);
            }
        }
        if !best.0.is_finite() {
            return Err(Error::IllConditioned("no hyperparameters gave a factorizable covariance".into()));
        }
        let hyper = Hyperparameters::from_log(&best.1, opts.fixed_noise);
        let model = Self::with_normalization(kernel, hyper, norm, inputs, targets)?;
        let report = FitReport {
            initial_log_likelihood: initial_ll,
            log_likelihood: -best.0,
        };
        Ok((model, report))
    }

    /// Log marginal likelihood of the normalized targets.
    pub fn log_likelihood(&self) -> f64 {
        let y = DVector::from_iterator(
            self.targets.len(),
            self.targets.iter().map(|t| (t - self.norm.output_mean) / self.norm.output_std),
        );
        log_likelihood(&self.factor, &y)
    }

    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// Posterior mean and latent (noise-free) variance, de-normalized.
    pub fn predict(&self, z: &[f64]) -> (f64, f64) {
        let zs = self.norm.input(z);
        let k_star = DVector::from_iterator(
            self.scaled.len(),
            self.scaled
                .iter()
                .map(|zi| self.kernel.eval(scaled_distance(&zs, zi, &self.hyper.lengthscales), self.hyper.signal_var)),
        );
        let mean_n = k_star.dot(&self.factor.alpha);
        let v = self
            .factor
            .chol
            .l_dirty()
            .solve_lower_triangular(&k_star)
            .expect("cholesky factor has a positive diagonal");
        let var_n = (self.hyper.signal_var - v.dot(&v)).max(0.0);
        let s = self.norm.output_std;
        (self.norm.output_mean + s * mean_n, s * s * var_n)
    }

    /// Prediction including observation noise.
    pub fn predict_noisy(&self, z: &[f64]) -> (f64, f64) {
        let (m, v) = self.predict(z);
        (m, v + self.noise_variance())
    }

    /// Observation-noise variance in target units.
    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_var * self.norm.output_std.powi(2)
    }

    /// Prior variance in target units.
    pub fn prior_variance(&self) -> f64 {
        self.hyper.signal_var * self.norm.output_std.powi(2)
    }

    pub fn to_file(&self) -> GpModelFile {
        GpModelFile {
            kernel: self.kernel,
            hyper: self.hyper.clone(),
            norm: self.norm.clone(),
            inputs: self.inputs.clone(),
            targets: self.targets.clone(),
        }
    }

    pub fn from_file(f: GpModelFile) -> Result<Self> {
        Self::with_normalization(f.kernel, f.hyper, f.norm, f.inputs, f.targets)
    }
}

fn validate_data(inputs: &[Vec<f64>], targets: &[f64]) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::EmptyDataset("GP without training points".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::InvalidConfig(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let dim = inputs[0].len();
    if dim == 0 || inputs.iter().any(|z| z.len() != dim) {
        return Err(Error::InvalidConfig("GP inputs must share a positive dimension".into()));
    }
    if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GP training data".into()));
    }
    Ok(())
}
