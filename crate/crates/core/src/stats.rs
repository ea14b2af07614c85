//! Joint chance-constraint statistics.
//!
//! A trajectory is reduced to its worst constraint value `C = max g_{j,t}`;
//! the fraction of trajectories with `C <= 0` is the empirical satisfaction
//! probability, and a one-sided Clopper–Pearson bound turns it into a lower
//! bound that holds with confidence `1 - ε`.

use serde::{Deserialize, Serialize};

use crate::env::{Trajectory, N_CONSTRAINTS};
use crate::error::{Error, Result};

const BETA_TOL: f64 = 1e-10;
const CF_MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Modified Lentz evaluation of the incomplete-beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            return Ok(h);
        }
    }
    Err(Error::Numeric(format!("incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn inc_beta(x: f64, a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Numeric(format!("incomplete beta needs a, b > 0 (got {a}, {b})")));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x >= 1.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok((ln_front.exp() * beta_cf(a, b, x)? / a).clamp(0.0, 1.0))
    } else {
        Ok((1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x)? / b).clamp(0.0, 1.0))
    }
}

/// Inverse of the regularized incomplete beta in `x`: finds `I_x(a, b) = p`.
///
/// Newton iterations on a bracket that shrinks every step; a Newton step
/// leaving the bracket falls back to bisection.
pub fn betainv(p: f64, a: f64, b: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Numeric(format!("betainv probability must lie in (0, 1), got {p}")));
    }
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Numeric(format!("betainv needs a, b > 0 (got {a}, {b})")));
    }
    let ln_b = ln_beta(a, b);
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    // start from the mean
    let mut x = a / (a + b);
    for _ in 0..500 {
        let f = inc_beta(x, a, b)? - p;
        if f.abs() < BETA_TOL * 0.5 {
            return Ok(x);
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let ln_pdf = (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_b;
        let pdf = ln_pdf.exp();
        let newton = x - f / pdf;
        x = if pdf.is_finite() && pdf > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < f64::EPSILON * x.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let f = inc_beta(x, a, b)? - p;
    if f.abs() < BETA_TOL {
        Ok(x)
    } else {
        Err(Error::Numeric(format!("betainv({p}, {a}, {b}) did not converge (residual {f:e})")))
    }
}

/// `C(X)`: worst constraint value over all constraints and times.
pub fn joint_violation_value(traj: &Trajectory) -> f64 {
    traj.constraints
        .iter()
        .flat_map(|g| g.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Fraction of `C` values that satisfy `C <= 0`.
pub fn ecdf(c_values: &[f64]) -> f64 {
    if c_values.is_empty() {
        return 0.0;
    }
    c_values.iter().filter(|&&c| c <= 0.0).count() as f64 / c_values.len() as f64
}

/// One-sided Clopper–Pearson lower bound on the satisfaction probability.
///
/// With `k = S·F̂_S` passes, `F_lb = 1 − betainv(1 − ε, S + 1 − k, k)`: the
/// upper `1 − ε` bound on the failure probability, complemented. `k = 0`
/// gives 0.
pub fn lower_bound(samples: usize, f_s: f64, epsilon: f64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::Numeric("lower bound needs at least one sample".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Numeric(format!("confidence parameter must lie in (0, 1), got {epsilon}")));
    }
    let passes = (f_s * samples as f64).round();
    if passes <= 0.0 {
        return Ok(0.0);
    }
    let s = samples as f64;
    Ok((1.0 - betainv(1.0 - epsilon, s + 1.0 - passes, passes)?).clamp(0.0, 1.0))
}

/// Nearest-rank empirical quantile: the sample of rank `⌈S·level⌉`.
pub fn empirical_quantile(samples: &[f64], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("quantile of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((n as f64 * level) - 1e-9 * n as f64).ceil().clamp(1.0, n as f64) as usize;
    Ok(sorted[rank - 1])
}

/// Incremental mean; exact for constant samples.
pub fn running_mean(samples: &[f64]) -> f64 {
    samples
        .iter()
        .enumerate()
        .fold(0.0, |m, (k, &x)| m + (x - m) / (k + 1) as f64)
}

/// Squared distance of the lower bound from its target `1 − α`.
pub fn residual(f_lb: f64, alpha: f64) -> f64 {
    let d = f_lb - (1.0 - alpha);
    d * d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EcdfSummary {
    pub samples: usize,
    pub passes: usize,
    pub f_s: f64,
    pub epsilon: f64,
    pub f_lb: f64,
}

impl EcdfSummary {
    pub fn from_c_values(c_values: &[f64], epsilon: f64) -> Result<Self> {
        let samples = c_values.len();
        let passes = c_values.iter().filter(|&&c| c <= 0.0).count();
        let f_s = ecdf(c_values);
        Ok(Self {
            samples,
            passes,
            f_s,
            epsilon,
            f_lb: lower_bound(samples, f_s, epsilon)?,
        })
    }

    pub fn from_trajectories(trajs: &[Trajectory], epsilon: f64) -> Result<Self> {
        let c: Vec<f64> = trajs.iter().map(joint_violation_value).collect();
        Self::from_c_values(&c, epsilon)
    }
}

/// Per-constraint, per-time backoff guesses `b⁰ = quantile_{1−δ}(g) − mean(g)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialBackoffs {
    /// `n_g × T`.
    pub base: Vec<Vec<f64>>,
    pub delta: f64,
    /// Samples used, `[j][t][s]`.
    pub samples: Vec<Vec<Vec<f64>>>,
}

pub fn initial_backoffs(trajs: &[Trajectory], delta: f64) -> Result<InitialBackoffs> {
    if trajs.len() < 2 {
        return Err(Error::EmptyDataset("initial backoffs need at least two trajectories".into()));
    }
    let horizon = trajs[0].constraints.len();
    if trajs.iter().any(|t| t.constraints.len() != horizon) {
        return Err(Error::InvalidConfig("trajectories have different horizons".into()));
    }
    let samples: Vec<Vec<Vec<f64>>> = (0..N_CONSTRAINTS)
        .map(|j| (0..horizon).map(|t| trajs.iter().map(|tr| tr.constraints[t][j]).collect()).collect())
        .collect();
    backoffs_from_samples(samples, delta)
}

pub fn backoffs_from_samples(samples: Vec<Vec<Vec<f64>>>, delta: f64) -> Result<InitialBackoffs> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidConfig(format!("delta must lie in (0, 1), got {delta}")));
    }
    let base = samples
        .iter()
        .map(|per_t| {
            per_t
                .iter()
                .map(|s| {
                    let mean = running_mean(s);
                    Ok(empirical_quantile(s, 1.0 - delta)? - mean)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(InitialBackoffs { base, delta, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_of_integers() {
        let mut fact = 1.0f64;
        for n in 1..20 {
            assert!((ln_gamma(n as f64) - fact.ln()).abs() < 1e-12 * (1.0 + fact.ln()), "n={n}");
            fact *= n as f64;
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn betainv_closed_form_beta_1_n() {
        let x = betainv(0.01, 1.0, 1000.0).unwrap();
        let exact = 1.0 - 0.99f64.powf(1.0 / 1000.0);
        assert!((x - exact).abs() < 1e-12);
        assert!((x - 1.00503e-5).abs() < 1e-9);
    }

    #[test]
    fn betainv_symmetric_median() {
        for a in [0.5, 1.0, 3.0, 40.0, 700.0] {
            assert!((betainv(0.5, a, a).unwrap() - 0.5).abs() < 1e-9, "a={a}");
        }
    }

    #[test]
    fn betainv_rejects_bad_input() {
        assert!(betainv(0.0, 1.0, 1.0).is_err());
        assert!(betainv(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn ecdf_counts_boundary_as_satisfied() {
        assert_eq!(ecdf(&[-0.1, -0.2, 0.3, -0.05]), 0.75);
        assert_eq!(ecdf(&[0.0, -1.0]), 1.0);
    }

    #[test]
    fn joint_violation_is_the_max() {
        let mut t = Trajectory::with_initial_state(crate::env::StateVec::new(1.0, 1.0, 0.0));
        t.constraints = vec![[-0.1, 0.3], [-0.2, -0.05]];
        assert_eq!(joint_violation_value(&t), 0.3);
        t.constraints = vec![[-0.5, -0.5]; 3];
        assert_eq!(joint_violation_value(&t), -0.5);
    }

    #[test]
    fn lower_bound_edge_cases() {
        assert_eq!(lower_bound(50, 0.0, 0.01).unwrap(), 0.0);
        let all = lower_bound(1000, 1.0, 0.01).unwrap();
        assert!((all - 0.01f64.powf(1.0 / 1000.0)).abs() < 1e-9, "{all}");
        assert!(lower_bound(200, 0.9, 0.01).unwrap() < 0.9);
    }

    #[test]
    fn quantile_nearest_rank() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&s, 0.95).unwrap(), 95.0);
        assert_eq!(empirical_quantile(&s, 1.0 - 1e-12).unwrap(), 100.0);
        assert_eq!(empirical_quantile(&[2.5; 7], 0.3).unwrap(), 2.5);
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn two_point_backoff() {
        let b = backoffs_from_samples(vec![vec![vec![-1.0, 1.0]]], 0.5).unwrap();
        // rank ⌈2·0.5⌉ = 1 picks the lower point; the upper one needs δ < 0.5
        assert_eq!(b.base[0][0], -1.0);
        let b = backoffs_from_samples(vec![vec![vec![-1.0, 1.0]]], 0.25).unwrap();
        assert_eq!(b.base[0][0], 1.0);
        let b = backoffs_from_samples(vec![vec![vec![0.4; 9]]], 0.05).unwrap();
        assert_eq!(b.base[0][0], 0.0);
    }

    #[test]
    fn residual_values() {
        assert_eq!(residual(0.99, 0.01), 0.0);
        assert!((residual(0.97, 0.01) - 4e-4).abs() < 1e-15);
        assert!((residual(0.995, 0.01) - residual(0.985, 0.01)).abs() < 1e-15);
    }
}
