//! Distributional comparison of two random-measure models, and the
//! exp-stability checks built on it.
//!
//! Equality in law is proxied by a fixed battery: a two-sample KS test on the
//! rightmost atom, chi-square tests on the counts in ten equal cells of
//! `[lo + 2, lo + 8]`, and z-tests on the cumulants of the standard test
//! functions that fit inside that region. The verdict is `rejected` iff some
//! p-value falls below `level / (number of tests)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::measure::Window;
use crate::model::{Model, ShiftedModel};
use crate::rng::{derive_seed, stream};
use crate::sampler::RandomMeasureSample;
use crate::stats::{chi2_homogeneity, ks_two_sample, z_score, z_two_sided_p, Accumulator};
use crate::test_function::{standard_battery, TestFunction};

/// Family-wise significance level of the battery.
pub const LEVEL: f64 = 0.001;
/// Cells in the count partition.
pub const CELLS: usize = 10;
/// Gap between the window's lower end and the comparison region.
pub const BUFFER: f64 = 2.0;
/// Length of the comparison region.
pub const REGION_LENGTH: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub left: String,
    pub right: String,
    /// `α, β` with `e^α + e^β = 1` when the comparison is a stability check.
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub replicas: u64,
    pub ks_stat_max: f64,
    pub ks_pvalue_max: f64,
    pub count_chi2_pvalues: Vec<f64>,
    pub cumulant_ids: Vec<String>,
    pub cumulant_zscores: Vec<f64>,
    pub tests: usize,
    pub level: f64,
    pub min_pvalue: f64,
    pub verdict: Verdict,
}

impl fmt::Display for StabilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}  vs  {}", self.left, self.right)?;
        if let (Some(a), Some(b)) = (self.alpha, self.beta) {
            writeln!(f, "alpha = {a:.6}  beta = {b:.6}")?;
        }
        writeln!(f, "replicas per side: {}", self.replicas)?;
        writeln!(
            f,
            "{:<22} {:>12} {:>12}",
            "test", "statistic", "p-value"
        )?;
        writeln!(
            f,
            "{:<22} {:>12.6} {:>12.3e}",
            "KS(max)", self.ks_stat_max, self.ks_pvalue_max
        )?;
        for (k, p) in self.count_chi2_pvalues.iter().enumerate() {
            writeln!(f, "{:<22} {:>12} {:>12.3e}", format!("chi2(cell {k})"), "", p)?;
        }
        for (id, z) in self.cumulant_ids.iter().zip(&self.cumulant_zscores) {
            writeln!(
                f,
                "{:<22} {:>12.3} {:>12.3e}",
                format!("K[{id}]"),
                z,
                z_two_sided_p(*z)
            )?;
        }
        write!(
            f,
            "verdict: {:?} (min p = {:.3e}, threshold {:.3e} over {} tests)",
            self.verdict,
            self.min_pvalue,
            self.level / self.tests as f64,
            self.tests
        )
    }
}

/// `[lo + 2, lo + 8)` for a window starting at `lo`.
pub fn comparison_region(window: Window) -> Result<Window> {
    let lo = window.lo() + BUFFER;
    let region = Window::new(lo, lo + REGION_LENGTH)?;
    window
        .intersect(&region)
        .filter(|r| *r == region)
        .ok_or(Error::InvalidWindow {
            lo: region.lo(),
            hi: region.hi(),
        })
}

struct Summary {
    max: f64,
    counts: [u64; CELLS],
    laplace: Vec<f64>,
}

fn summarize(
    z: &RandomMeasureSample,
    window: Window,
    region: Window,
    battery: &[TestFunction],
) -> Result<Summary> {
    let max = z
        .config
        .atoms()
        .last()
        .map_or(window.lo(), |a| a.position);
    let width = region.length() / CELLS as f64;
    let mut counts = [0u64; CELLS];
    for (k, c) in counts.iter_mut().enumerate() {
        let lo = region.lo() + k as f64 * width;
        let hi = if k + 1 == CELLS {
            region.hi()
        } else {
            region.lo() + (k + 1) as f64 * width
        };
        *c = z.config.mass_in(&Window::new(lo, hi)?).round() as u64;
    }
    let laplace = battery
        .iter()
        .map(|f| z.pair(f).map(|p| (-p).exp()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary {
        max,
        counts,
        laplace,
    })
}

fn collect<M: Model + ?Sized>(
    model: &M,
    window: Window,
    region: Window,
    battery: &[TestFunction],
    replicas: u64,
    seed: u64,
    tag: u64,
    exec: Execution,
) -> Result<Vec<Summary>> {
    exec.try_map(replicas, |i| {
        let z = model.sample(window, derive_seed(seed, tag, i))?;
        summarize(&z, window, region, battery)
    })
}

/// Runs the battery on `left` vs `right`, each drawn `replicas` times on
/// `window` from disjoint streams of `seed`.
pub fn compare_models<A: Model + ?Sized, B: Model + ?Sized>(
    left: &A,
    right: &B,
    window: Window,
    replicas: u64,
    seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    let region = comparison_region(window)?;
    let battery: Vec<TestFunction> = standard_battery()
        .into_iter()
        .filter(|f| region.covers(&f.support()))
        .collect();
    let a = collect(left, window, region, &battery, replicas, seed, stream::SIDE_A, exec)?;
    let b = collect(right, window, region, &battery, replicas, seed, stream::SIDE_B, exec)?;

    let max_a: Vec<f64> = a.iter().map(|s| s.max).collect();
    let max_b: Vec<f64> = b.iter().map(|s| s.max).collect();
    let ks = ks_two_sample(&max_a, &max_b);

    let count_chi2_pvalues: Vec<f64> = (0..CELLS)
        .map(|k| {
            let ca: Vec<u64> = a.iter().map(|s| s.counts[k]).collect();
            let cb: Vec<u64> = b.iter().map(|s| s.counts[k]).collect();
            chi2_homogeneity(&ca, &cb).p_value
        })
        .collect();

    let cumulant_zscores: Vec<f64> = (0..battery.len())
        .map(|k| {
            let la = Accumulator::from_values(&a.iter().map(|s| s.laplace[k]).collect::<Vec<_>>());
            let lb = Accumulator::from_values(&b.iter().map(|s| s.laplace[k]).collect::<Vec<_>>());
            let (ka, sa) = (-la.mean().ln(), la.std_error() / la.mean());
            let (kb, sb) = (-lb.mean().ln(), lb.std_error() / lb.mean());
            z_score(ka - kb, sa * sa + sb * sb)
        })
        .collect();

    let pvalues: Vec<f64> = std::iter::once(ks.p_value)
        .chain(count_chi2_pvalues.iter().copied())
        .chain(cumulant_zscores.iter().map(|&z| z_two_sided_p(z)))
        .collect();
    let tests = pvalues.len();
    let min_pvalue = pvalues.iter().copied().fold(1.0, f64::min);
    let verdict = if min_pvalue < LEVEL / tests as f64 {
        Verdict::Rejected
    } else {
        Verdict::Consistent
    };
    Ok(StabilityReport {
        left: left.label(),
        right: right.label(),
        alpha: None,
        beta: None,
        replicas,
        ks_stat_max: ks.statistic,
        ks_pvalue_max: ks.p_value,
        count_chi2_pvalues,
        cumulant_ids: battery.iter().map(|f| f.id().to_string()).collect(),
        cumulant_zscores,
        tests,
        level: LEVEL,
        min_pvalue,
        verdict,
    })
}

/// `β = log(1 - e^α)`; requires `e^α ∈ (0, 1)`.
pub fn complementary_shift(alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha < 0.0) {
        return Err(Error::DegenerateAlpha(alpha));
    }
    let beta = (-alpha.exp()).ln_1p();
    if !beta.is_finite() {
        return Err(Error::DegenerateAlpha(alpha));
    }
    Ok(beta)
}

/// `T_α Z + T_β Z'` with `Z, Z'` independent copies of the inner model.
pub struct StableCombination<M> {
    pub inner: M,
    pub alpha: f64,
    pub beta: f64,
}

impl<M: Model> Model for StableCombination<M> {
    fn label(&self) -> String {
        format!(
            "T[{:.4}]Z + T[{:.4}]Z' of {}",
            self.alpha,
            self.beta,
            self.inner.label()
        )
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        let z = self
            .inner
            .sample(window.translate(-self.alpha), derive_seed(seed, stream::SIDE_B, 0))?
            .translate(self.alpha);
        let z2 = self
            .inner
            .sample(window.translate(-self.beta), derive_seed(seed, stream::SIDE_B_PRIME, 0))?
            .translate(self.beta);
        Ok(z.superpose(&z2))
    }
}

/// `Z + Z'` for independent copies.
pub struct Superposed<M> {
    pub inner: M,
}

impl<M: Model> Model for Superposed<M> {
    fn label(&self) -> String {
        format!("Z + Z' of {}", self.inner.label())
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        let z = self.inner.sample(window, derive_seed(seed, stream::SIDE_B, 0))?;
        let z2 = self
            .inner
            .sample(window, derive_seed(seed, stream::SIDE_B_PRIME, 0))?;
        Ok(z.superpose(&z2))
    }
}

/// Compares `Z` against `T_α Z + T_β Z'`.
pub fn check_stability<M: Model>(
    model: &M,
    window: Window,
    alpha: f64,
    replicas: u64,
    seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    let beta = complementary_shift(alpha)?;
    let combo = StableCombination {
        inner: model,
        alpha,
        beta,
    };
    let mut report = compare_models(model, &combo, window, replicas, seed, exec)?;
    report.alpha = Some(alpha);
    report.beta = Some(beta);
    Ok(report)
}

/// Compares `Z + Z'` against `T_{log 2} Z`.
pub fn check_superposition_shift<M: Model>(
    model: &M,
    window: Window,
    replicas: u64,
    seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    let doubled = Superposed { inner: model };
    let shifted = ShiftedModel {
        inner: model,
        by: std::f64::consts::LN_2,
    };
    let mut report = compare_models(&doubled, &shifted, window, replicas, seed, exec)?;
    report.alpha = Some(-std::f64::consts::LN_2);
    report.beta = Some(-std::f64::consts::LN_2);
    Ok(report)
}
