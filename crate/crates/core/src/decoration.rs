//! Decoration laws: the point process attached at each Poisson atom.
//!
//! A law declares an almost-sure upper bound on its rightmost atom. Exact
//! window sampling depends on that bound, so every draw is checked against it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measure::{Atom, PointConfiguration, Window};
use crate::rng::{open_unit, std_exp, ReplicaRng};

pub trait Decoration: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// One draw. Laws with infinitely many atoms return only the atoms at or
    /// above `floor`; finite laws ignore it and must consume the generator
    /// identically whatever `floor` is.
    fn sample(&self, rng: &mut ReplicaRng, floor: f64) -> Result<PointConfiguration>;

    /// Almost-sure bound on the rightmost atom; `+inf` if none, `-inf` for
    /// the null law.
    fn upper_bound(&self) -> f64;

    fn lower_bound(&self) -> f64 {
        f64::NEG_INFINITY
    }

    /// `E⟨D, e^x⟩` when known in closed form (possibly `+inf`).
    fn mean_exp_pairing(&self) -> Option<f64> {
        None
    }

    fn has_finite_atoms(&self) -> bool {
        true
    }

    /// `D(window)` for one draw.
    fn count_in(&self, rng: &mut ReplicaRng, window: Window) -> Result<u64> {
        let d = self.sample(rng, window.lo())?;
        Ok(d.mass_in(&window).round() as u64)
    }
}

/// Shared handle to a decoration law.
#[derive(Clone, Debug)]
pub struct DecorationLaw(Arc<dyn Decoration>);

impl DecorationLaw {
    pub fn new(d: impl Decoration + 'static) -> Self {
        DecorationLaw(Arc::new(d))
    }

    pub fn name(&self) -> &str {
        self.0.name()
    }

    /// One draw, with the declared upper bound enforced.
    pub fn sample(&self, rng: &mut ReplicaRng, floor: f64) -> Result<PointConfiguration> {
        let d = self.0.sample(rng, floor)?;
        if let Some(last) = d.atoms().last() {
            if last.position > self.0.upper_bound() {
                return Err(Error::DecorationBoundViolated {
                    name: self.name().to_string(),
                    rightmost: last.position,
                    bound: self.0.upper_bound(),
                });
            }
        }
        Ok(d)
    }

    pub fn count_in(&self, rng: &mut ReplicaRng, window: Window) -> Result<u64> {
        self.0.count_in(rng, window)
    }

    pub fn upper_bound(&self) -> f64 {
        self.0.upper_bound()
    }

    pub fn lower_bound(&self) -> f64 {
        self.0.lower_bound()
    }

    pub fn mean_exp_pairing(&self) -> Option<f64> {
        self.0.mean_exp_pairing()
    }

    pub fn has_finite_atoms(&self) -> bool {
        self.0.has_finite_atoms()
    }

    /// `T_by D`.
    pub fn shifted(&self, by: f64) -> Self {
        DecorationLaw::new(Shifted {
            name: format!("{}+{}", self.name(), by),
            inner: self.clone(),
            by,
        })
    }

    /// Wraps a user sampler; draws are checked against `upper_bound`.
    pub fn from_fn<F>(name: &str, upper_bound: f64, f: F) -> Self
    where
        F: Fn(&mut ReplicaRng) -> Result<PointConfiguration> + Send + Sync + 'static,
    {
        DecorationLaw::new(UserDefined {
            name: name.to_string(),
            upper_bound,
            f: Arc::new(f),
        })
    }

    pub fn dirac0() -> Self {
        Self::new(Dirac::at(0.0))
    }
}

#[derive(Debug, Clone)]
pub struct Dirac {
    name: String,
    at: f64,
}

impl Dirac {
    pub fn at(at: f64) -> Self {
        let name = if at == 0.0 {
            "dirac0".to_string()
        } else {
            format!("dirac({at})")
        };
        Dirac { name, at }
    }
}

impl Decoration for Dirac {
    fn name(&self) -> &str {
        &self.name
    }

    fn sample(&self, _rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        Ok(PointConfiguration::from_sorted_unchecked(
            vec![Atom::unit(self.at)?],
            None,
        ))
    }

    fn upper_bound(&self) -> f64 {
        self.at
    }

    fn lower_bound(&self) -> f64 {
        self.at
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        Some(self.at.exp())
    }
}

/// A rightmost atom at 0 plus `k` iid atoms at `-E`, `E ~ Exp(rate)`,
/// optionally conditioned on `E ≤ cap`.
#[derive(Debug, Clone)]
pub struct FiniteCluster {
    k: usize,
    rate: f64,
    cap: Option<f64>,
}

impl FiniteCluster {
    pub fn new(k: usize, rate: f64, cap: Option<f64>) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", "must be positive"));
        }
        if let Some(c) = cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid("cap", "must be positive"));
            }
        }
        Ok(FiniteCluster { k, rate, cap })
    }

    fn offset(&self, rng: &mut ReplicaRng) -> f64 {
        match self.cap {
            None => std_exp(rng) / self.rate,
            Some(cap) => {
                let u = open_unit(rng);
                let mass = -(-self.rate * cap).exp_m1();
                -(-u * mass).ln_1p() / self.rate
            }
        }
    }
}

impl Decoration for FiniteCluster {
    fn name(&self) -> &str {
        "finite-cluster"
    }

    fn sample(&self, rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        let mut atoms = Vec::with_capacity(self.k + 1);
        atoms.push(Atom::unit(0.0)?);
        for _ in 0..self.k {
            atoms.push(Atom::unit(-self.offset(rng))?);
        }
        PointConfiguration::new(atoms)
    }

    fn upper_bound(&self) -> f64 {
        0.0
    }

    fn lower_bound(&self) -> f64 {
        self.cap.map_or(f64::NEG_INFINITY, |c| -c)
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        let r = self.rate;
        let per_atom = match self.cap {
            None => r / (r + 1.0),
            Some(c) => r / (r + 1.0) * (-(-(r + 1.0) * c).exp_m1()) / (-(-r * c).exp_m1()),
        };
        Some(1.0 + self.k as f64 * per_atom)
    }
}

/// Deterministic atoms at `0, -gap, ..., -(k-1) gap`.
#[derive(Debug, Clone)]
pub struct Staircase {
    k: usize,
    gap: f64,
}

impl Staircase {
    pub fn new(k: usize, gap: f64) -> Result<Self> {
        if k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if !(gap > 0.0 && gap.is_finite()) {
            return Err(invalid("gap", "must be positive"));
        }
        Ok(Staircase { k, gap })
    }
}

impl Decoration for Staircase {
    fn name(&self) -> &str {
        "staircase"
    }

    fn sample(&self, _rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        let atoms = (0..self.k)
            .rev()
            .map(|j| Atom::unit(-(j as f64) * self.gap))
            .collect::<Result<Vec<_>>>()?;
        Ok(PointConfiguration::from_sorted_unchecked(atoms, None))
    }

    fn upper_bound(&self) -> f64 {
        0.0
    }

    fn lower_bound(&self) -> f64 {
        -((self.k - 1) as f64) * self.gap
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        Some((0..self.k).map(|j| (-(j as f64) * self.gap).exp()).sum())
    }
}

/// Single atom at `a` with probability `p`, else at `b`.
#[derive(Debug, Clone)]
pub struct TwoPoint {
    a: f64,
    b: f64,
    p: f64,
}

impl TwoPoint {
    pub fn new(a: f64, b: f64, p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(invalid("p", "must lie in [0, 1]"));
        }
        if !a.is_finite() || !b.is_finite() {
            return Err(invalid("a/b", "must be finite"));
        }
        Ok(TwoPoint { a, b, p })
    }
}

impl Decoration for TwoPoint {
    fn name(&self) -> &str {
        "two-point"
    }

    fn sample(&self, rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        let u = open_unit(rng);
        let at = if u <= self.p { self.a } else { self.b };
        Ok(PointConfiguration::from_sorted_unchecked(
            vec![Atom::unit(at)?],
            None,
        ))
    }

    fn upper_bound(&self) -> f64 {
        self.a.max(self.b)
    }

    fn lower_bound(&self) -> f64 {
        self.a.min(self.b)
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        Some(self.p * self.a.exp() + (1.0 - self.p) * self.b.exp())
    }
}

/// A rightmost-free cluster: an atom at 0 plus `k` iid atoms at `+E`,
/// `E ~ Exp(rate)`. Unbounded above; only usable in truncated mode.
#[derive(Debug, Clone)]
pub struct UpCluster {
    k: usize,
    rate: f64,
}

impl UpCluster {
    pub fn new(k: usize, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(invalid("rate", "must be positive"));
        }
        Ok(UpCluster { k, rate })
    }
}

impl Decoration for UpCluster {
    fn name(&self) -> &str {
        "up-cluster"
    }

    fn sample(&self, rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        let mut atoms = Vec::with_capacity(self.k + 1);
        atoms.push(Atom::unit(0.0)?);
        for _ in 0..self.k {
            atoms.push(Atom::unit(std_exp(rng) / self.rate)?);
        }
        PointConfiguration::new(atoms)
    }

    fn upper_bound(&self) -> f64 {
        f64::INFINITY
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        let r = self.rate;
        Some(if r > 1.0 {
            1.0 + self.k as f64 * r / (r - 1.0)
        } else {
            f64::INFINITY
        })
    }
}

/// `δ₀` plus a Poisson process on `(-∞, 0)` with intensity `|x| e^{|x|} dx`.
/// `E⟨D, e^x⟩ = +∞`, so the resulting DPPP has infinite intensity.
#[derive(Debug, Clone, Default)]
pub struct ExpGrowth;

impl ExpGrowth {
    /// Cumulative intensity of `(-s, 0)`: `∫_0^s u e^u du = (s-1) e^s + 1`.
    pub fn cumulative(s: f64) -> f64 {
        (s - 1.0) * s.exp() + 1.0
    }

    /// Inverse of [`Self::cumulative`] by safeguarded Newton iteration.
    pub fn inverse_cumulative(target: f64, warm_start: f64) -> f64 {
        if target <= 0.0 {
            return 0.0;
        }
        let f = |s: f64| Self::cumulative(s) - target;
        let mut lo = 0.0;
        let mut hi = warm_start.max(1.0);
        while f(hi) < 0.0 {
            lo = hi;
            hi *= 2.0;
        }
        let mut s = if warm_start > lo && warm_start < hi {
            warm_start
        } else {
            hi
        };
        for _ in 0..200 {
            let v = f(s);
            if v > 0.0 {
                hi = s;
            } else {
                lo = s;
            }
            let d = s * s.exp();
            let mut next = s - v / d;
            if !(next > lo && next < hi) || d == 0.0 {
                next = 0.5 * (lo + hi);
            }
            if (next - s).abs() <= 1e-14 * s.max(1.0) {
                return next;
            }
            s = next;
        }
        s
    }
}

impl Decoration for ExpGrowth {
    fn name(&self) -> &str {
        "exp-growth"
    }

    fn sample(&self, rng: &mut ReplicaRng, floor: f64) -> Result<PointConfiguration> {
        let depth = (-floor).max(0.0);
        let total = Self::cumulative(depth);
        let mut below = Vec::new();
        let mut gamma = 0.0;
        let mut s = 0.0;
        loop {
            gamma += std_exp(rng);
            if gamma > total {
                break;
            }
            s = Self::inverse_cumulative(gamma, s);
            below.push(Atom::unit(-s)?);
            if below.len() > crate::measure::MAX_ATOMS {
                return Err(Error::TooManyAtoms {
                    cap: crate::measure::MAX_ATOMS,
                });
            }
        }
        below.reverse();
        below.push(Atom::unit(0.0)?);
        Ok(PointConfiguration::from_sorted_unchecked(below, None))
    }

    fn count_in(&self, rng: &mut ReplicaRng, window: Window) -> Result<u64> {
        let at_zero = u64::from(window.contains(0.0));
        let upper = window.hi().min(0.0);
        if window.lo() >= upper {
            return Ok(at_zero);
        }
        let mean = Self::cumulative(-window.lo()) - Self::cumulative(-upper);
        if !(mean > 0.0) {
            return Ok(at_zero);
        }
        if !mean.is_finite() {
            return Err(Error::TooManyAtoms { cap: usize::MAX });
        }
        let n = Poisson::new(mean)
            .map_err(|e| invalid("mean", e.to_string()))?
            .sample(rng);
        Ok(at_zero + n as u64)
    }

    fn upper_bound(&self) -> f64 {
        0.0
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        Some(f64::INFINITY)
    }

    fn has_finite_atoms(&self) -> bool {
        false
    }
}

/// The null measure: contributes nothing. Only the deterministic density
/// component of a random measure survives.
#[derive(Debug, Clone, Default)]
pub struct Null;

impl Decoration for Null {
    fn name(&self) -> &str {
        "null"
    }

    fn sample(&self, _rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        Ok(PointConfiguration::empty())
    }

    fn upper_bound(&self) -> f64 {
        f64::NEG_INFINITY
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        Some(0.0)
    }
}

#[derive(Debug, Clone)]
struct Shifted {
    name: String,
    inner: DecorationLaw,
    by: f64,
}

impl Decoration for Shifted {
    fn name(&self) -> &str {
        &self.name
    }

    fn sample(&self, rng: &mut ReplicaRng, floor: f64) -> Result<PointConfiguration> {
        Ok(self.inner.sample(rng, floor - self.by)?.translate(self.by))
    }

    fn count_in(&self, rng: &mut ReplicaRng, window: Window) -> Result<u64> {
        self.inner.count_in(rng, window.translate(-self.by))
    }

    fn upper_bound(&self) -> f64 {
        self.inner.upper_bound() + self.by
    }

    fn lower_bound(&self) -> f64 {
        self.inner.lower_bound() + self.by
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        self.inner.mean_exp_pairing().map(|v| v * self.by.exp())
    }

    fn has_finite_atoms(&self) -> bool {
        self.inner.has_finite_atoms()
    }
}

type UserFn = dyn Fn(&mut ReplicaRng) -> Result<PointConfiguration> + Send + Sync;

struct UserDefined {
    name: String,
    upper_bound: f64,
    f: Arc<UserFn>,
}

impl fmt::Debug for UserDefined {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserDefined")
            .field("name", &self.name)
            .field("upper_bound", &self.upper_bound)
            .finish()
    }
}

impl Decoration for UserDefined {
    fn name(&self) -> &str {
        &self.name
    }

    fn sample(&self, rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        (self.f)(rng)
    }

    fn upper_bound(&self) -> f64 {
        self.upper_bound
    }
}

/// Weighted finite collection of configurations, sampled by inversion of the
/// cumulative weights.
#[derive(Debug, Clone)]
pub struct Empirical {
    name: String,
    configs: Arc<Vec<PointConfiguration>>,
    cumulative: Vec<f64>,
    upper: f64,
    lower: f64,
}

impl Empirical {
    pub fn new(name: &str, configs: Vec<PointConfiguration>, weights: &[f64]) -> Result<Self> {
        if configs.is_empty() || configs.len() != weights.len() {
            return Err(invalid(
                "weights",
                "need one non-negative weight per configuration",
            ));
        }
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(weights.len());
        for &w in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(invalid("weights", "must be finite and non-negative"));
            }
            acc += w;
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(invalid("weights", "total weight must be positive"));
        }
        for c in &mut cumulative {
            *c /= acc;
        }
        let upper = configs
            .iter()
            .filter_map(|c| c.atoms().last().map(|a| a.position))
            .fold(f64::NEG_INFINITY, f64::max);
        let lower = configs
            .iter()
            .filter_map(|c| c.atoms().first().map(|a| a.position))
            .fold(f64::INFINITY, f64::min);
        Ok(Empirical {
            name: name.to_string(),
            configs: Arc::new(configs),
            cumulative,
            upper,
            lower,
        })
    }

    pub fn configs(&self) -> &[PointConfiguration] {
        &self.configs
    }

    /// Normalized weights.
    pub fn weights(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.cumulative
            .iter()
            .map(|&c| {
                let w = c - prev;
                prev = c;
                w
            })
            .collect()
    }

    pub fn pick(&self, rng: &mut ReplicaRng) -> usize {
        let u = 1.0 - open_unit(rng);
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&EmpiricalJson {
            name: self.name.clone(),
            configurations: self
                .configs
                .iter()
                .map(crate::measure::ConfigurationJson::from)
                .collect(),
            weights: self.weights(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: EmpiricalJson = serde_json::from_str(s)?;
        let configs = raw
            .configurations
            .into_iter()
            .map(PointConfiguration::try_from)
            .collect::<Result<Vec<_>>>()?;
        Self::new(&raw.name, configs, &raw.weights)
    }
}

#[derive(Serialize, Deserialize)]
struct EmpiricalJson {
    name: String,
    configurations: Vec<crate::measure::ConfigurationJson>,
    weights: Vec<f64>,
}

impl Decoration for Empirical {
    fn name(&self) -> &str {
        &self.name
    }

    fn sample(&self, rng: &mut ReplicaRng, _floor: f64) -> Result<PointConfiguration> {
        Ok(self.configs[self.pick(rng)].clone())
    }

    fn upper_bound(&self) -> f64 {
        self.upper
    }

    fn lower_bound(&self) -> f64 {
        self.lower
    }

    fn mean_exp_pairing(&self) -> Option<f64> {
        let w = self.weights();
        Some(
            self.configs
                .iter()
                .zip(w)
                .map(|(c, w)| w * c.positions().map(f64::exp).sum::<f64>())
                .sum(),
        )
    }
}

/// Decoration named in an experiment config: `name` plus numeric parameters,
/// or a `file` holding an empirical law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecorationSpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl DecorationSpec {
    pub fn named(name: &str) -> Self {
        DecorationSpec {
            name: name.to_string(),
            params: BTreeMap::new(),
            file: None,
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.get(key, default as f64);
        if v < 0.0 || v.fract() != 0.0 {
            return Err(invalid(key, "must be a non-negative integer"));
        }
        Ok(v as usize)
    }

    pub fn build(&self) -> Result<DecorationLaw> {
        let law = match self.name.as_str() {
            "dirac0" => DecorationLaw::dirac0(),
            "dirac" | "point" => DecorationLaw::new(Dirac::at(self.get("a", 0.0))),
            "finite-cluster" => DecorationLaw::new(FiniteCluster::new(
                self.count("k", 3)?,
                self.get("rate", 1.0),
                self.params.get("cap").copied(),
            )?),
            "staircase" => DecorationLaw::new(Staircase::new(
                self.count("k", 3)?,
                self.get("gap", 1.0),
            )?),
            "two-point" => DecorationLaw::new(TwoPoint::new(
                self.get("a", 0.0),
                self.get("b", std::f64::consts::LN_2),
                self.get("p", 0.5),
            )?),
            "up-cluster" => DecorationLaw::new(UpCluster::new(
                self.count("k", 2)?,
                self.get("rate", 2.0),
            )?),
            "exp-growth" => DecorationLaw::new(ExpGrowth),
            "null" => DecorationLaw::new(Null),
            "empirical" => {
                let path = self
                    .file
                    .as_ref()
                    .ok_or_else(|| invalid("file", "empirical decoration needs a file"))?;
                DecorationLaw::new(Empirical::from_json(&std::fs::read_to_string(path)?)?)
            }
            other => return Err(Error::UnknownDecoration(other.to_string())),
        };
        Ok(match self.params.get("shift") {
            Some(&by) if by != 0.0 => law.shifted(by),
            _ => law,
        })
    }
}

/// The three built-in bounded decorations used by the test batteries.
pub fn builtin_battery() -> Vec<DecorationLaw> {
    vec![
        DecorationLaw::dirac0(),
        DecorationLaw::new(FiniteCluster::new(3, 1.0, None).expect("valid")),
        DecorationLaw::new(Staircase::new(3, 1.0).expect("valid")),
    ]
}
