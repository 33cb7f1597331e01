//! Goodness-of-fit and summary statistics used by the verification batteries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

/// Standard errors per side of every normal-approximation interval.
pub const Z_CI: f64 = 3.0;

/// Running mean and variance; mergeable so that sharded runs combine exactly
/// as if accumulated in one pass (up to rounding).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Two-pass mean and variance in index order.
    pub fn from_values(xs: &[f64]) -> Self {
        let n = xs.len() as u64;
        if n == 0 {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let m2 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        Accumulator { n, mean, m2 }
    }

    pub fn merge(&self, other: &Self) -> Self {
        if self.n == 0 {
            return *other;
        }
        if other.n == 0 {
            return *self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Accumulator { n, mean, m2 }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }
}

/// Unbiased sample covariance of paired values.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    assert_eq!(n, ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (n - 1) as f64
}

/// Survival function of the Kolmogorov distribution,
/// `Q(λ) = 2 Σ_{k≥1} (-1)^{k-1} e^{-2k²λ²}`.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-17 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// `λ` with `Q(λ) = alpha`.
pub fn kolmogorov_isf(alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.2, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn effective_scale(en: f64) -> f64 {
    en + 0.12 + 0.11 / en
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample KS test of `samples` against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> KsResult {
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = cdf(x);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(effective_scale(n.sqrt()) * d),
    }
}

/// Critical value of the one-sample KS statistic at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    kolmogorov_isf(alpha) / effective_scale((n as f64).sqrt())
}

/// Two-sample KS test; ties are handled by stepping over equal values
/// together.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len(), ys.len());
    if n == 0 || m == 0 {
        return KsResult {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let v = xs[i].min(ys[j]);
        while i < n && xs[i] == v {
            i += 1;
        }
        while j < m && ys[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_sf(effective_scale(en) * d),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Minimum expected cell count after pooling.
pub const MIN_EXPECTED: f64 = 5.0;

/// Chi-square test that two samples of counts share a distribution. Adjacent
/// count values are pooled from the bottom until every expected cell reaches
/// [`MIN_EXPECTED`]; the remainder joins the last bin.
pub fn chi2_homogeneity(a: &[u64], b: &[u64]) -> Chi2Result {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let total = na + nb;
    let mut freq: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &v in a {
        freq.entry(v).or_default().0 += 1.0;
    }
    for &v in b {
        freq.entry(v).or_default().1 += 1.0;
    }
    let need = MIN_EXPECTED * total / na.min(nb);
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut cur = (0.0, 0.0);
    for (_, (x, y)) in freq {
        cur.0 += x;
        cur.1 += y;
        if cur.0 + cur.1 >= need {
            bins.push(cur);
            cur = (0.0, 0.0);
        }
    }
    if cur.0 + cur.1 > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += cur.0;
                last.1 += cur.1;
            }
            None => bins.push(cur),
        }
    }
    if bins.len() < 2 {
        return Chi2Result {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        };
    }
    let mut stat = 0.0;
    for &(x, y) in &bins {
        let col = x + y;
        let ea = na * col / total;
        let eb = nb * col / total;
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    let dof = bins.len() - 1;
    let p = ChiSquared::new(dof as f64)
        .map(|d| d.sf(stat))
        .unwrap_or(f64::NAN);
    Chi2Result {
        statistic: stat,
        dof,
        p_value: p.clamp(0.0, 1.0),
    }
}

/// Two-sided normal p-value of a z-score.
pub fn z_two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// `diff / sqrt(var)`, with `0/0 = 0`.
pub fn z_score(diff: f64, var: f64) -> f64 {
    if var <= 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    } else {
        diff / var.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_from_seed, std_exp};

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.1).collect();
        let whole = Accumulator::from_values(&xs);
        let (l, r) = xs.split_at(313);
        let merged = Accumulator::from_values(l).merge(&Accumulator::from_values(r));
        assert_eq!(merged.count(), whole.count());
        assert!((merged.mean() - whole.mean()).abs() < 1e-12);
        assert!((merged.variance() - whole.variance()).abs() < 1e-10);
        let mut pushed = Accumulator::default();
        xs.iter().for_each(|&x| pushed.push(x));
        assert!((pushed.variance() - whole.variance()).abs() < 1e-10);
    }

    #[test]
    fn kolmogorov_quantiles() {
        // Tabulated asymptotic critical values.
        assert!((kolmogorov_isf(0.05) - 1.35810).abs() < 1e-4);
        assert!((kolmogorov_isf(0.001) - 1.94947).abs() < 1e-4);
        assert!((kolmogorov_sf(1.35810) - 0.05).abs() < 1e-5);
    }

    #[test]
    fn ks_one_sample_accepts_correct_law() {
        let mut rng = rng_from_seed(1);
        let xs: Vec<f64> = (0..5000).map(|_| std_exp(&mut rng)).collect();
        let r = ks_one_sample(&xs, |x| 1.0 - (-x).exp());
        assert!(r.p_value > 0.01, "{r:?}");
        let r = ks_one_sample(&xs, |x| 1.0 - (-1.3 * x).exp());
        assert!(r.p_value < 1e-6, "{r:?}");
    }

    #[test]
    fn ks_two_sample_exact_small_case() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.5, 2.5, 3.5, 4.5]);
        // ECDF gap is largest just after 3.0: 1 - 2/4.
        assert!((r.statistic - 0.5).abs() < 1e-15);
        let r = ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 1.0, 2.0]);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn chi2_detects_shifted_counts() {
        let mut rng = rng_from_seed(2);
        let a: Vec<u64> = (0..5000).map(|_| (std_exp(&mut rng) * 3.0) as u64).collect();
        let b: Vec<u64> = (0..5000).map(|_| (std_exp(&mut rng) * 3.0) as u64).collect();
        let c: Vec<u64> = (0..5000).map(|_| (std_exp(&mut rng) * 3.6) as u64).collect();
        assert!(chi2_homogeneity(&a, &b).p_value > 0.001);
        assert!(chi2_homogeneity(&a, &c).p_value < 1e-6);
    }

    #[test]
    fn chi2_degenerate_is_uninformative() {
        let r = chi2_homogeneity(&[0; 100], &[0; 100]);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn z_helpers() {
        let p = z_two_sided_p(1.959963984540054);
        assert!((p - 0.05).abs() < 1e-10, "{p}");
        assert_eq!(z_score(0.0, 0.0), 0.0);
    }
}
