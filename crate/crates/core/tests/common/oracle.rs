use ccpo::gp::{GpModel, Hyperparameters, Kernel};
use ccpo::rng::{stream, Stage};
use rand::Rng;

/// Textbook GP posterior with an explicit Gauss-Jordan inverse.
pub struct Oracle {
    kernel: Kernel,
    ls: Vec<f64>,
    sf2: f64,
    sn2: f64,
    mx: Vec<f64>,
    sx: Vec<f64>,
    my: f64,
    sy: f64,
    x: Vec<Vec<f64>>,
    kinv: Vec<Vec<f64>>,
    y: Vec<f64>,
}

fn pop_std(v: &[f64]) -> (f64, f64) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    let s = (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64).sqrt();
    (m, s)
}

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        inv.swap(c, p);
        let d = a[c][c];
        for j in 0..n {
            a[c][j] /= d;
            inv[c][j] /= d;
        }
        for r in 0..n {
            if r != c {
                let f = a[r][c];
                for j in 0..n {
                    a[r][j] -= f * a[c][j];
                    inv[r][j] -= f * inv[c][j];
                }
            }
        }
    }
    inv
}

impl Oracle {
    fn k(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a.iter().zip(b).zip(&self.ls).map(|((p, q), l)| ((p - q) / l).powi(2)).sum();
        match self.kernel {
            Kernel::SquaredExponential => self.sf2 * (-r2 / 2.0).exp(),
            Kernel::Matern32 => {
                let r = (3.0 * r2).sqrt();
                self.sf2 * (1.0 + r) * (-r).exp()
            }
        }
    }

    pub fn new(kernel: Kernel, h: &Hyperparameters, inputs: &[Vec<f64>], targets: &[f64]) -> Self {
        let dim = inputs[0].len();
        let (mx, sx): (Vec<f64>, Vec<f64>) = (0..dim)
            .map(|d| pop_std(&inputs.iter().map(|z| z[d]).collect::<Vec<_>>()))
            .unzip();
        let (my, sy) = pop_std(targets);
        let x: Vec<Vec<f64>> = inputs
            .iter()
            .map(|z| z.iter().enumerate().map(|(d, v)| (v - mx[d]) / sx[d]).collect())
            .collect();
        let y = targets.iter().map(|t| (t - my) / sy).collect();
        let mut o = Oracle {
            kernel,
            ls: h.lengthscales.clone(),
            sf2: h.signal_var,
            sn2: h.noise_var,
            mx,
            sx,
            my,
            sy,
            x,
            kinv: Vec::new(),
            y,
        };
        let n = inputs.len();
        let k: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| o.k(&o.x[i], &o.x[j]) + if i == j { o.sn2 } else { 0.0 }).collect())
            .collect();
        o.kinv = invert(k);
        o
    }

    pub fn predict(&self, z: &[f64]) -> (f64, f64) {
        let zs: Vec<f64> = z.iter().enumerate().map(|(d, v)| (v - self.mx[d]) / self.sx[d]).collect();
        let ks: Vec<f64> = self.x.iter().map(|xi| self.k(&zs, xi)).collect();
        let n = ks.len();
        let mut mean = 0.0;
        let mut quad = 0.0;
        for i in 0..n {
            for j in 0..n {
                mean += ks[i] * self.kinv[i][j] * self.y[j];
                quad += ks[i] * self.kinv[i][j] * ks[j];
            }
        }
        (self.my + self.sy * mean, self.sy * self.sy * (self.sf2 - quad))
    }
}

pub fn dataset(seed: u64, n: usize, dim: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut rng = stream(seed, Stage::Init, &[n as u64, dim as u64]);
    let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-2.0..3.0)).collect()).collect();
    let y = x
        .iter()
        .map(|z| 4.0 + z.iter().enumerate().map(|(d, v)| (v * (d + 1) as f64).sin()).sum::<f64>() + 0.05 * rng.random::<f64>())
        .collect();
    (x, y)
}

/// Largest mean/variance gap between the model and the oracle over the
/// training inputs and 30 random probes, for both kernels and four datasets.
pub fn worst_gap() -> f64 {
    let mut worst: f64 = 0.0;
    for kernel in [Kernel::Matern32, Kernel::SquaredExponential] {
        for (seed, dim) in [(1, 1), (2, 2), (3, 3), (4, 5)] {
            let (x, y) = dataset(seed, 20, dim);
            let h = Hyperparameters {
                lengthscales: (0..dim).map(|d| 0.6 + 0.3 * d as f64).collect(),
                signal_var: 1.3,
                noise_var: 1e-3,
            };
            let gp = GpModel::new(kernel, h.clone(), x.clone(), y.clone()).unwrap();
            assert_eq!(gp.jitter(), 0.0);
            let oracle = Oracle::new(kernel, &h, &x, &y);
            let mut rng = stream(seed, Stage::Evaluate, &[]);
            let probes: Vec<Vec<f64>> = x
                .iter()
                .cloned()
                .chain((0..30).map(|_| (0..dim).map(|_| rng.random_range(-3.0..4.0)).collect()))
                .collect();
            for z in probes {
                let (m, v) = gp.predict(&z);
                let (mo, vo) = oracle.predict(&z);
                worst = worst.max((m - mo).abs()).max((v - vo).abs());
            }
        }
    }
    worst
}
