//! Seeded generation of the Poisson process with intensity `e^{-x} dx` and of
//! decorated Poisson point processes `Z = Σ T_{ξ_i} D_i` on a window.
//!
//! Poisson atoms above a floor are generated top-down as `ξ_k = -log Γ_k`,
//! where `Γ_k` are the arrival times of a unit-rate Poisson process on
//! `(0, e^{-floor}]`. Each decoration draws from its own stream keyed by the
//! rank of its anchor, so lowering the floor only appends atoms.

use serde::{Deserialize, Serialize};

use crate::decoration::DecorationLaw;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::measure::{Atom, PointConfiguration, Window};
use crate::rng::{derive_seed, rng_for, rng_from_seed, std_exp, stream, ReplicaRng};
use crate::stats::{Accumulator, Z_CI};
use crate::test_function::TestFunction;

/// Atomic part plus the deterministic density `c e^{-x} dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomMeasureSample {
    pub config: PointConfiguration,
    pub density_coeff: f64,
}

impl RandomMeasureSample {
    pub fn atomic(config: PointConfiguration) -> Self {
        RandomMeasureSample {
            config,
            density_coeff: 0.0,
        }
    }

    /// `T_x`: atoms move by `x`, and `c e^{-y}` becomes `c e^{x} e^{-y}`.
    pub fn translate(&self, x: f64) -> Self {
        RandomMeasureSample {
            config: self.config.translate(x),
            density_coeff: self.density_coeff * x.exp(),
        }
    }

    pub fn superpose(&self, other: &Self) -> Self {
        RandomMeasureSample {
            config: self.config.superpose(&other.config),
            density_coeff: self.density_coeff + other.density_coeff,
        }
    }

    pub fn restrict(&self, window: Window) -> Self {
        RandomMeasureSample {
            config: self.config.restrict(window),
            density_coeff: self.density_coeff,
        }
    }

    pub fn pair(&self, f: &TestFunction) -> Result<f64> {
        self.config.pair(f, self.density_coeff)
    }
}

/// Everything needed to draw the DPPP on a window.
#[derive(Debug, Clone)]
pub struct DpppSpec {
    pub decoration: DecorationLaw,
    pub density_coeff: f64,
    pub window: Window,
    pub seed: u64,
}

impl DpppSpec {
    pub fn new(
        decoration: DecorationLaw,
        density_coeff: f64,
        window: Window,
        seed: u64,
    ) -> Result<Self> {
        if !(density_coeff >= 0.0 && density_coeff.is_finite()) {
            return Err(invalid("density_coeff", "must be finite and non-negative"));
        }
        if !window.lo().is_finite() {
            return Err(invalid("window", "lower end must be finite"));
        }
        Ok(DpppSpec {
            decoration,
            density_coeff,
            window,
            seed,
        })
    }

    pub fn with_window(&self, window: Window) -> Result<Self> {
        Self::new(self.decoration.clone(), self.density_coeff, window, self.seed)
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        DpppSpec {
            seed,
            ..self.clone()
        }
    }

    /// Seed of replica `index` of this spec.
    pub fn replica_seed(&self, index: u64) -> u64 {
        derive_seed(self.seed, stream::PRIMARY, index)
    }

    pub fn sample_replica(&self, index: u64) -> Result<RandomMeasureSample> {
        sample_dppp_seeded(
            &self.decoration,
            self.density_coeff,
            self.window,
            self.replica_seed(index),
        )
    }

    pub fn sample_replicas(&self, replicas: u64, exec: Execution) -> Result<Vec<RandomMeasureSample>> {
        exec.try_map(replicas, |i| self.sample_replica(i))
    }
}

/// Visits `ξ ≥ floor` of the Poisson process `e^{-x} dx`, largest first.
pub fn for_each_poisson_atom<F>(floor: f64, rng: &mut ReplicaRng, mut visit: F) -> Result<()>
where
    F: FnMut(u64, f64) -> Result<()>,
{
    if floor == f64::INFINITY {
        return Ok(());
    }
    if !floor.is_finite() {
        return Err(invalid("floor", "must be finite"));
    }
    let horizon = (-floor).exp();
    let mut gamma = 0.0;
    let mut rank = 0u64;
    loop {
        gamma += std_exp(rng);
        if gamma > horizon {
            return Ok(());
        }
        visit(rank, -gamma.ln())?;
        rank += 1;
    }
}

/// Exact sample of the Poisson process with intensity `e^{-x} dx` on
/// `[lo, ∞)`, sorted ascending.
pub fn sample_gumbel_ppp(lo: f64, rng: &mut ReplicaRng) -> Result<PointConfiguration> {
    let window = Window::above(lo)?;
    let mut atoms = Vec::new();
    for_each_poisson_atom(lo, rng, |_, xi| {
        atoms.push(Atom::unit(xi)?);
        Ok(())
    })?;
    atoms.reverse();
    Ok(PointConfiguration::from_sorted_unchecked(atoms, Some(window)))
}

fn sample_dppp_seeded(
    decoration: &DecorationLaw,
    density_coeff: f64,
    window: Window,
    replica_seed: u64,
) -> Result<RandomMeasureSample> {
    let ub = decoration.upper_bound();
    if ub == f64::INFINITY {
        return Err(Error::UnboundedDecoration(decoration.name().to_string()));
    }
    sample_above_floor(decoration, density_coeff, window, window.lo() - ub, replica_seed)
}

fn sample_above_floor(
    decoration: &DecorationLaw,
    density_coeff: f64,
    window: Window,
    xi_floor: f64,
    replica_seed: u64,
) -> Result<RandomMeasureSample> {
    let mut rng = rng_from_seed(replica_seed);
    let mut atoms: Vec<Atom> = Vec::new();
    for_each_poisson_atom(xi_floor, &mut rng, |rank, xi| {
        let mut drng = rng_for(replica_seed, stream::DECORATION, rank);
        let d = decoration.sample(&mut drng, window.lo() - xi)?;
        atoms.extend(
            d.atoms()
                .iter()
                .map(|a| Atom {
                    position: a.position + xi,
                    mass: a.mass,
                })
                .filter(|a| window.contains(a.position)),
        );
        if atoms.len() > crate::measure::MAX_ATOMS {
            return Err(Error::TooManyAtoms {
                cap: crate::measure::MAX_ATOMS,
            });
        }
        Ok(())
    })?;
    atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
    Ok(RandomMeasureSample {
        config: PointConfiguration::from_sorted_unchecked(atoms, Some(window)),
        density_coeff,
    })
}

/// Exact draw of the DPPP restricted to `spec.window`, driven by `spec.seed`.
pub fn sample_dppp(spec: &DpppSpec) -> Result<RandomMeasureSample> {
    sample_dppp_seeded(&spec.decoration, spec.density_coeff, spec.window, spec.seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub xi_floor: f64,
    /// Expected number of discarded anchors whose decoration reaches the
    /// window; bounds the probability that truncation changed the sample.
    pub escape_prob_bound: f64,
}

/// Draws used to estimate the escape bound when it is not zero by geometry.
pub const ESCAPE_DRAWS: u64 = 10_000;

/// Like [`sample_dppp`] but only anchors `ξ ≥ xi_floor` are used. Works for
/// decorations unbounded above.
pub fn sample_dppp_truncated(
    spec: &DpppSpec,
    xi_floor: f64,
) -> Result<(RandomMeasureSample, TruncationReport)> {
    if !(xi_floor < spec.window.lo()) {
        return Err(invalid("xi_floor", "must lie below the window"));
    }
    let sample = sample_above_floor(
        &spec.decoration,
        spec.density_coeff,
        spec.window,
        xi_floor,
        spec.seed,
    )?;
    let report = TruncationReport {
        xi_floor,
        escape_prob_bound: escape_bound(&spec.decoration, spec.window.lo(), xi_floor, spec.seed)?,
    };
    Ok((sample, report))
}

/// `∫_{-∞}^{floor} e^{-y} P(M(D) ≥ lo - y) dy`, estimated as the mean of
/// `(e^{M_j - lo} - e^{-floor})_+` over draws `M_j` of the rightmost atom.
/// Exactly zero when the declared bound rules out any hit.
fn escape_bound(decoration: &DecorationLaw, lo: f64, xi_floor: f64, seed: u64) -> Result<f64> {
    if xi_floor + decoration.upper_bound() < lo {
        return Ok(0.0);
    }
    let reach = lo - xi_floor;
    let tail = (-xi_floor).exp();
    let mut total = 0.0;
    for j in 0..ESCAPE_DRAWS {
        let mut rng = rng_for(seed, stream::DIAGNOSTIC, j);
        let d = decoration.sample(&mut rng, reach)?;
        if let Some(top) = d.atoms().last() {
            total += ((top.position - lo).exp() - tail).max(0.0);
        }
    }
    Ok(total / ESCAPE_DRAWS as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityEstimate {
    pub lo: f64,
    pub hi: f64,
    pub mean: f64,
    pub std_error: f64,
    /// Half-width of the normal-approximation interval at [`Z_CI`] standard
    /// errors.
    pub half_width: f64,
    pub replicas: u64,
    /// `E⟨D, e^x⟩ ∫_A e^{-x} dx`, when the pairing is known.
    pub prediction: Option<f64>,
}

impl IntensityEstimate {
    pub fn covers_prediction(&self) -> Option<bool> {
        self.prediction
            .map(|p| (p - self.mean).abs() <= self.half_width)
    }
}

/// Monte Carlo estimate of `E[Z(A)]`.
pub fn intensity_estimate(
    spec: &DpppSpec,
    area: Window,
    replicas: u64,
    exec: Execution,
) -> Result<IntensityEstimate> {
    if replicas < 100 {
        return Err(invalid("replicas", "at least 100 required"));
    }
    if !area.is_bounded() {
        return Err(invalid("area", "must be bounded"));
    }
    let ub = spec.decoration.upper_bound();
    if ub == f64::INFINITY {
        return Err(Error::UnboundedDecoration(
            spec.decoration.name().to_string(),
        ));
    }
    let counts = exec.try_map(replicas, |i| {
        let seed = spec.replica_seed(i);
        let mut rng = rng_from_seed(seed);
        let mut count = 0u64;
        for_each_poisson_atom(area.lo() - ub, &mut rng, |rank, xi| {
            let mut drng = rng_for(seed, stream::DECORATION, rank);
            count += spec.decoration.count_in(&mut drng, area.translate(-xi))?;
            Ok(())
        })?;
        Ok::<_, Error>(count as f64)
    })?;
    let acc = Accumulator::from_values(&counts);
    let prediction = spec.decoration.mean_exp_pairing().map(|m| {
        if m == 0.0 {
            0.0
        } else {
            m * area.exp_mass()
        }
    });
    Ok(IntensityEstimate {
        lo: area.lo(),
        hi: area.hi(),
        mean: acc.mean(),
        std_error: acc.std_error(),
        half_width: Z_CI * acc.std_error(),
        replicas,
        prediction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityScan {
    pub estimates: Vec<IntensityEstimate>,
    /// `mean / ∫_A e^{-x} dx` per window; constant (= `E⟨D, e^x⟩`) when the
    /// intensity is finite.
    pub normalized: Vec<f64>,
    pub infinite_intensity: bool,
}

/// Growth of the normalized estimator over the scan beyond which the
/// intensity is flagged as infinite.
pub const GROWTH_FLAG_RATIO: f64 = 1.25;

/// Estimates `E[Z([-k, 0])]` for each `k` with common random numbers and
/// flags the infinite-intensity regime: the normalized estimator increases at
/// every step and grows by more than [`GROWTH_FLAG_RATIO`] overall.
pub fn intensity_scan(
    spec: &DpppSpec,
    depths: &[f64],
    replicas: u64,
    exec: Execution,
) -> Result<IntensityScan> {
    let estimates = depths
        .iter()
        .map(|&k| intensity_estimate(spec, Window::new(-k, 0.0)?, replicas, exec))
        .collect::<Result<Vec<_>>>()?;
    let normalized: Vec<f64> = estimates
        .iter()
        .map(|e| e.mean / Window::new(e.lo, e.hi).map(|w| w.exp_mass()).unwrap_or(f64::NAN))
        .collect();
    let increasing = normalized.windows(2).all(|w| w[1] > w[0]);
    let grown = match (normalized.first(), normalized.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a > GROWTH_FLAG_RATIO,
        _ => false,
    };
    let infinite_intensity = normalized.len() >= 2 && increasing && grown;
    Ok(IntensityScan {
        estimates,
        normalized,
        infinite_intensity,
    })
}
