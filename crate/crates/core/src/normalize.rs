//! Canonical form of a decoration: the pair `(m, D)` with `M(D) = 0` a.s. and
//! `DPPP(D') = T_m DPPP(D)` in law.
//!
//! `m = log E[e^{M(D')}]` and `D` is `T_{-M(D')} D'` under the measure tilted
//! by `e^{M(D')}`. Both are estimated from a pool of draws of `D'`: `D` becomes
//! an empirical law on the recentred pool configurations with weights
//! proportional to `e^{M}`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decoration::{DecorationLaw, Empirical};
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::measure::{PointConfiguration, Window};
use crate::model::{DpppModel, ShiftedModel};
use crate::rng::{rng_for, stream};
use crate::stability::{compare_models, StabilityReport};

/// Pool draws of decorations with infinitely many atoms keep only the atoms
/// within this distance below the top one.
pub const INFINITE_ATOM_DEPTH: f64 = 6.0;
/// ESS fraction below which a warning is logged.
pub const ESS_WARN_FRACTION: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct CanonicalPair {
    pub m: f64,
    pub decoration: Empirical,
    /// Kish effective sample size of the tilting weights.
    pub ess: f64,
    pub n_pool: u64,
}

#[derive(Serialize, Deserialize)]
struct CanonicalSummary {
    m: f64,
    ess: f64,
    n_pool: u64,
    source: String,
}

impl CanonicalPair {
    pub fn law(&self) -> DecorationLaw {
        DecorationLaw::new(self.decoration.clone())
    }

    /// Writes `<stem>.json` with `m`, ESS and pool size, and
    /// `<stem>.law.json` with the empirical decoration.
    pub fn write(&self, dir: &Path, stem: &str, source: &str) -> Result<()> {
        let summary = CanonicalSummary {
            m: self.m,
            ess: self.ess,
            n_pool: self.n_pool,
            source: source.to_string(),
        };
        std::fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_string_pretty(&summary)?,
        )?;
        std::fs::write(dir.join(format!("{stem}.law.json")), self.decoration.to_json()?)?;
        Ok(())
    }
}

fn pool_floor(dprime: &DecorationLaw) -> f64 {
    if dprime.has_finite_atoms() {
        f64::NEG_INFINITY
    } else {
        dprime.upper_bound().min(0.0) - INFINITE_ATOM_DEPTH
    }
}

/// Estimates `(m, D)` from `n_pool` draws of `dprime`.
pub fn canonicalize(
    dprime: &DecorationLaw,
    n_pool: u64,
    seed: u64,
    exec: Execution,
) -> Result<CanonicalPair> {
    if n_pool == 0 {
        return Err(invalid("n_pool", "must be positive"));
    }
    let floor = pool_floor(dprime);
    let pool = exec.try_map(n_pool, |j| {
        let d = dprime.sample(&mut rng_for(seed, stream::POOL, j), floor)?;
        let top = d.rightmost();
        if d.is_empty() || !top.is_finite() {
            return Err(Error::NullDecoration(dprime.name().to_string()));
        }
        Ok((top, d.translate(-top)))
    })?;
    let top_max = pool.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = pool.iter().map(|p| (p.0 - top_max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    let sum_sq: f64 = weights.iter().map(|w| w * w).sum();
    let m = top_max + (sum / n_pool as f64).ln();
    if !m.is_finite() {
        return Err(Error::UnboundedDecoration(dprime.name().to_string()));
    }
    let ess = sum * sum / sum_sq;
    if ess < ESS_WARN_FRACTION * n_pool as f64 {
        log::warn!(
            "canonicalization of `{}`: effective sample size {ess:.0} of {n_pool}",
            dprime.name()
        );
    }
    let configs: Vec<PointConfiguration> = pool.into_iter().map(|p| p.1).collect();
    let decoration = Empirical::new(&format!("canonical({})", dprime.name()), configs, &weights)?;
    Ok(CanonicalPair {
        m,
        decoration,
        ess,
        n_pool,
    })
}

/// Compares `DPPP(c, D')` against `T_shift DPPP(c e^{-shift}, D)`.
pub fn compare_canonical(
    dprime: &DecorationLaw,
    density_coeff: f64,
    decoration: &DecorationLaw,
    shift: f64,
    window: Window,
    replicas: u64,
    seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    let original = DpppModel::new(dprime.clone(), density_coeff);
    let canonical = ShiftedModel {
        inner: DpppModel::new(decoration.clone(), density_coeff * (-shift).exp()),
        by: shift,
    };
    compare_models(&original, &canonical, window, replicas, seed, exec)
}

/// [`compare_canonical`] at the estimated `m`.
pub fn verify_equivalence(
    dprime: &DecorationLaw,
    density_coeff: f64,
    pair: &CanonicalPair,
    window: Window,
    replicas: u64,
    seed: u64,
    exec: Execution,
) -> Result<StabilityReport> {
    compare_canonical(
        dprime,
        density_coeff,
        &pair.law(),
        pair.m,
        window,
        replicas,
        seed,
        exec,
    )
}
