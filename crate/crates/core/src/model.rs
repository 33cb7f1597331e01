//! Random-measure models that can be drawn on an arbitrary window from a
//! seed. The stability and equivalence batteries compare two models through
//! this interface.

use std::sync::Arc;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::decoration::DecorationLaw;
use crate::error::{invalid, Result};
use crate::measure::{Atom, PointConfiguration, Window};
use crate::rng::{open_unit, rng_from_seed};
use crate::sampler::{DpppSpec, RandomMeasureSample};

pub trait Model: Send + Sync {
    fn label(&self) -> String;

    /// One realisation restricted to `window`; a pure function of `seed`.
    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample>;
}

impl<M: Model + ?Sized> Model for &M {
    fn label(&self) -> String {
        (**self).label()
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        (**self).sample(window, seed)
    }
}

impl<M: Model + ?Sized> Model for Arc<M> {
    fn label(&self) -> String {
        (**self).label()
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        (**self).sample(window, seed)
    }
}

impl<M: Model + ?Sized> Model for Box<M> {
    fn label(&self) -> String {
        (**self).label()
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        (**self).sample(window, seed)
    }
}

/// The DPPP built from a decoration law and density coefficient.
#[derive(Debug, Clone)]
pub struct DpppModel {
    pub decoration: DecorationLaw,
    pub density_coeff: f64,
}

impl DpppModel {
    pub fn new(decoration: DecorationLaw, density_coeff: f64) -> Self {
        DpppModel {
            decoration,
            density_coeff,
        }
    }
}

impl From<&DpppSpec> for DpppModel {
    fn from(spec: &DpppSpec) -> Self {
        DpppModel::new(spec.decoration.clone(), spec.density_coeff)
    }
}

impl Model for DpppModel {
    fn label(&self) -> String {
        format!("dppp[{}; c={}]", self.decoration.name(), self.density_coeff)
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        let spec = DpppSpec::new(self.decoration.clone(), self.density_coeff, window, seed)?;
        crate::sampler::sample_dppp(&spec)
    }
}

/// `T_by Z` for a model `Z`.
#[derive(Debug, Clone)]
pub struct ShiftedModel<M> {
    pub inner: M,
    pub by: f64,
}

impl<M: Model> Model for ShiftedModel<M> {
    fn label(&self) -> String {
        format!("T[{}]({})", self.by, self.inner.label())
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        Ok(self
            .inner
            .sample(window.translate(-self.by), seed)?
            .translate(self.by))
    }
}

/// Poisson process with intensity `e^{-x²} dx`. Not exp-stable; used as the
/// negative control of the stability battery.
#[derive(Debug, Clone, Default)]
pub struct GaussianIntensityPoisson;

impl GaussianIntensityPoisson {
    /// Variance-1/2 normal: `e^{-x²} = √π · φ_{1/2}(x)`.
    fn law() -> Normal {
        Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid normal")
    }

    pub fn mass(window: Window) -> f64 {
        let n = Self::law();
        std::f64::consts::PI.sqrt() * (n.cdf(window.hi()) - n.cdf(window.lo()))
    }
}

impl Model for GaussianIntensityPoisson {
    fn label(&self) -> String {
        "poisson[e^{-x^2}]".to_string()
    }

    fn sample(&self, window: Window, seed: u64) -> Result<RandomMeasureSample> {
        let law = Self::law();
        let mean = Self::mass(window);
        if !(mean.is_finite()) {
            return Err(invalid("window", "intensity mass must be finite"));
        }
        let mut rng = rng_from_seed(seed);
        // Poisson count by inversion; the mean is at most √π.
        let u = open_unit(&mut rng);
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        while u > cdf && k < 10_000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        let (clo, chi) = (law.cdf(window.lo()), law.cdf(window.hi()));
        let atoms = (0..k)
            .map(|_| {
                let v: f64 = rng.random();
                Atom::unit(law.inverse_cdf(clo + v * (chi - clo)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RandomMeasureSample::atomic(
            PointConfiguration::new(atoms)?.with_window(window),
        ))
    }
}
