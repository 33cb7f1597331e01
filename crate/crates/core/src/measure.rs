//! Finite atomic measures on the real line.
//!
//! A [`PointConfiguration`] is the materialized part of a random measure on a
//! window: a list of weighted atoms kept sorted by position. Translation, the
//! rightmost functional and pairing against test functions all act on it.

use std::cmp::Ordering;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::test_function::TestFunction;

/// Hard cap on the number of atoms in one configuration.
pub const MAX_ATOMS: usize = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub position: f64,
    pub mass: f64,
}

impl Atom {
    pub fn new(position: f64, mass: f64) -> Result<Self> {
        if !position.is_finite() || !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::InvalidAtom { position, mass });
        }
        Ok(Atom { position, mass })
    }

    pub fn unit(position: f64) -> Result<Self> {
        Self::new(position, 1.0)
    }
}

/// Half-open interval `[lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    lo: f64,
    hi: f64,
}

impl Window {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(Error::InvalidWindow { lo, hi });
        }
        Ok(Window { lo, hi })
    }

    /// `[lo, +inf)`.
    pub fn above(lo: f64) -> Result<Self> {
        Self::new(lo, f64::INFINITY)
    }

    pub fn real_line() -> Self {
        Window {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x < self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// True if `other` lies inside `self`.
    pub fn covers(&self, other: &Window) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn translate(&self, x: f64) -> Window {
        Window {
            lo: self.lo + x,
            hi: self.hi + x,
        }
    }

    pub fn intersect(&self, other: &Window) -> Option<Window> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Window { lo, hi })
    }

    /// `∫_lo^hi e^{-x} dx`, infinite when `lo = -inf`.
    pub fn exp_mass(&self) -> f64 {
        (-self.lo).exp() - (-self.hi).exp()
    }
}

/// Sorted list of weighted atoms, optionally tagged with the window it was
/// sampled on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointConfiguration {
    atoms: Vec<Atom>,
    window: Option<Window>,
}

impl PointConfiguration {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validates and stably sorts `atoms`; equal positions keep insertion order.
    pub fn new(mut atoms: Vec<Atom>) -> Result<Self> {
        if atoms.len() > MAX_ATOMS {
            return Err(Error::TooManyAtoms { cap: MAX_ATOMS });
        }
        for a in &atoms {
            Atom::new(a.position, a.mass)?;
        }
        atoms.sort_by(|a, b| a.position.total_cmp(&b.position));
        Ok(PointConfiguration {
            atoms,
            window: None,
        })
    }

    pub fn from_positions<I: IntoIterator<Item = f64>>(positions: I) -> Result<Self> {
        let atoms = positions
            .into_iter()
            .map(Atom::unit)
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms)
    }

    /// Caller guarantees sorted, finite, positive-mass atoms.
    pub(crate) fn from_sorted_unchecked(atoms: Vec<Atom>, window: Option<Window>) -> Self {
        debug_assert!(atoms
            .windows(2)
            .all(|w| w[0].position <= w[1].position));
        PointConfiguration { atoms, window }
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = Some(window);
        self
    }

    pub fn window(&self) -> Option<Window> {
        self.window
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn positions(&self) -> impl Iterator<Item = f64> + '_ {
        self.atoms.iter().map(|a| a.position)
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass).sum()
    }

    /// All masses are positive integers.
    pub fn is_counting(&self) -> bool {
        self.atoms.iter().all(|a| a.mass.fract() == 0.0)
    }

    /// `T_x μ`: every atom moves by `+x`.
    pub fn translate(&self, x: f64) -> PointConfiguration {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: a.position + x,
                mass: a.mass,
            })
            .collect();
        PointConfiguration {
            atoms,
            window: self.window.map(|w| w.translate(x)),
        }
    }

    /// The rightmost functional `M(μ) = inf{x : μ((x,∞)) < 1 ∧ μ(ℝ)/2}`.
    ///
    /// For a nonempty counting measure this is the largest atom position; the
    /// null measure maps to `+inf`.
    pub fn rightmost(&self) -> f64 {
        let total = self.total_mass();
        if self.atoms.is_empty() || total <= 0.0 {
            return f64::INFINITY;
        }
        let threshold = 1.0_f64.min(total / 2.0);
        // tail(x) = mass strictly above x; step function, constant on
        // [q_k, q_{k+1}) between distinct positions. The infimum is the first
        // distinct position whose strict tail falls below the threshold.
        let mut tail = 0.0;
        let mut i = self.atoms.len();
        let mut candidate = f64::INFINITY;
        while i > 0 {
            let q = self.atoms[i - 1].position;
            if tail < threshold {
                candidate = q;
            } else {
                break;
            }
            while i > 0 && self.atoms[i - 1].position == q {
                tail += self.atoms[i - 1].mass;
                i -= 1;
            }
        }
        candidate
    }

    /// Atoms with position in `window`, tagged with that window.
    pub fn restrict(&self, window: Window) -> PointConfiguration {
        let start = self.atoms.partition_point(|a| a.position < window.lo());
        let end = self.atoms.partition_point(|a| a.position < window.hi());
        PointConfiguration {
            atoms: self.atoms[start..end.max(start)].to_vec(),
            window: Some(window),
        }
    }

    /// `μ(window)`.
    pub fn mass_in(&self, window: &Window) -> f64 {
        let start = self.atoms.partition_point(|a| a.position < window.lo());
        let end = self.atoms.partition_point(|a| a.position < window.hi());
        self.atoms[start..end.max(start)].iter().map(|a| a.mass).sum()
    }

    /// `Σ mass_i f(pos_i)`.
    pub fn pair_atoms(&self, f: &TestFunction) -> f64 {
        self.atoms.iter().map(|a| a.mass * f.eval(a.position)).sum()
    }

    /// `⟨μ, f⟩ + c ∫ f(x) e^{-x} dx`.
    pub fn pair(&self, f: &TestFunction, density_coeff: f64) -> Result<f64> {
        let atomic = self.pair_atoms(f);
        if density_coeff == 0.0 {
            return Ok(atomic);
        }
        Ok(atomic + density_coeff * exp_weighted_integral(f)?)
    }

    /// Image under `x ↦ e^x`; masses preserved.
    pub fn exp_transform(&self) -> PointConfiguration {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: a.position.exp(),
                mass: a.mass,
            })
            .collect();
        PointConfiguration {
            atoms,
            window: self
                .window
                .map(|w| Window {
                    lo: w.lo.exp(),
                    hi: w.hi.exp(),
                }),
        }
    }

    /// Multiplies every position by `factor > 0`.
    pub fn scale_positions(&self, factor: f64) -> PointConfiguration {
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                position: a.position * factor,
                mass: a.mass,
            })
            .collect();
        PointConfiguration {
            atoms,
            window: self.window.map(|w| Window {
                lo: w.lo * factor,
                hi: w.hi * factor,
            }),
        }
    }

    /// Merges atoms at equal positions into one atom carrying the summed mass.
    pub fn canonicalize(&self) -> PointConfiguration {
        let mut atoms: Vec<Atom> = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            match atoms.last_mut() {
                Some(last) if last.position == a.position => last.mass += a.mass,
                _ => atoms.push(*a),
            }
        }
        PointConfiguration {
            atoms,
            window: self.window,
        }
    }

    /// Equality as measures (after merging duplicate positions).
    pub fn same_measure(&self, other: &PointConfiguration) -> bool {
        self.canonicalize().atoms == other.canonicalize().atoms
    }

    /// Sum of two measures; the window is dropped unless both agree.
    pub fn superpose(&self, other: &PointConfiguration) -> PointConfiguration {
        let mut atoms = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.atoms.len() && j < other.atoms.len() {
            if other.atoms[j].position.total_cmp(&self.atoms[i].position) == Ordering::Less {
                atoms.push(other.atoms[j]);
                j += 1;
            } else {
                atoms.push(self.atoms[i]);
                i += 1;
            }
        }
        atoms.extend_from_slice(&self.atoms[i..]);
        atoms.extend_from_slice(&other.atoms[j..]);
        let window = match (self.window, other.window) {
            (Some(a), Some(b)) if a == b => Some(a),
            _ => None,
        };
        PointConfiguration { atoms, window }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["position", "mass"])?;
        for a in &self.atoms {
            w.write_record([a.position.to_string(), a.mass.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["position", "mass"] {
            return Err(Error::Parse(format!(
                "expected header `position,mass`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut atoms = Vec::new();
        for row in r.records() {
            let row = row?;
            let field = |k: usize| -> Result<f64> {
                let raw = row.get(k).unwrap_or("");
                raw.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number `{raw}`")))
            };
            atoms.push(Atom::new(field(0)?, field(1)?)?);
        }
        Self::new(atoms)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ConfigurationJson::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: ConfigurationJson = serde_json::from_str(s)?;
        raw.try_into()
    }
}

/// `∫ f(x) e^{-x} dx` over the support of `f`.
pub fn exp_weighted_integral(f: &TestFunction) -> Result<f64> {
    quadrature::integrate_exp_weighted(f)
}

/// Wire form: `{"atoms":[[pos,mass],...],"window":[lo,hi]}` with `null` for an
/// infinite window end.
#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ConfigurationJson {
    pub atoms: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[Option<f64>; 2]>,
}

impl From<&PointConfiguration> for ConfigurationJson {
    fn from(c: &PointConfiguration) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        ConfigurationJson {
            atoms: c.atoms.iter().map(|a| [a.position, a.mass]).collect(),
            window: c.window.map(|w| [finite(w.lo), finite(w.hi)]),
        }
    }
}

impl TryFrom<ConfigurationJson> for PointConfiguration {
    type Error = Error;

    fn try_from(raw: ConfigurationJson) -> Result<Self> {
        let atoms = raw
            .atoms
            .into_iter()
            .map(|[p, m]| Atom::new(p, m))
            .collect::<Result<Vec<_>>>()?;
        let mut c = PointConfiguration::new(atoms)?;
        if let Some([lo, hi]) = raw.window {
            c.window = Some(Window::new(
                lo.unwrap_or(f64::NEG_INFINITY),
                hi.unwrap_or(f64::INFINITY),
            )?);
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weighted(pairs: &[(f64, f64)]) -> PointConfiguration {
        PointConfiguration::new(pairs.iter().map(|&(p, m)| Atom { position: p, mass: m }).collect())
            .unwrap()
    }

    /// Direct scan of `inf{x : μ((x,∞)) < 1 ∧ μ(ℝ)/2}` over a grid plus the
    /// atom positions themselves (the infimum is always attained at one).
    fn rightmost_bruteforce(mu: &PointConfiguration) -> f64 {
        let total: f64 = mu.atoms().iter().map(|a| a.mass).sum();
        if mu.is_empty() {
            return f64::INFINITY;
        }
        let thr = 1.0_f64.min(total / 2.0);
        let tail = |x: f64| -> f64 {
            mu.atoms()
                .iter()
                .filter(|a| a.position > x)
                .map(|a| a.mass)
                .sum()
        };
        let lo = mu.atoms()[0].position - 1.0;
        let hi = mu.atoms()[mu.len() - 1].position + 1.0;
        let mut candidates: Vec<f64> = (0..=20_000)
            .map(|k| lo + (hi - lo) * k as f64 / 20_000.0)
            .collect();
        candidates.extend(mu.positions());
        candidates
            .into_iter()
            .filter(|&x| tail(x) < thr)
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn window_rejects_empty_interval() {
        assert!(Window::new(1.0, 1.0).is_err());
        assert!(Window::new(2.0, 1.0).is_err());
        assert!(Window::new(f64::NAN, 1.0).is_err());
        assert!(Window::above(0.0).is_ok());
    }

    #[test]
    fn atom_validation() {
        assert!(Atom::new(f64::NAN, 1.0).is_err());
        assert!(Atom::new(f64::INFINITY, 1.0).is_err());
        assert!(Atom::new(0.0, 0.0).is_err());
        assert!(Atom::new(0.0, -1.0).is_err());
    }

    #[test]
    fn translate_examples() {
        let mu = PointConfiguration::from_positions([0.0]).unwrap();
        assert_eq!(mu.translate(2.5).positions().collect::<Vec<_>>(), vec![2.5]);
        let mu = PointConfiguration::from_positions([1.0, 3.0]).unwrap();
        assert_eq!(mu.translate(-1.0).positions().collect::<Vec<_>>(), vec![0.0, 2.0]);
        assert_eq!(mu.translate(0.0), mu);
        let w = PointConfiguration::from_positions([1.0])
            .unwrap()
            .with_window(Window::above(0.0).unwrap());
        assert_eq!(w.translate(2.0).window().unwrap().lo(), 2.0);
    }

    #[test]
    fn rightmost_examples() {
        assert_eq!(PointConfiguration::from_positions([5.0]).unwrap().rightmost(), 5.0);
        assert_eq!(PointConfiguration::empty().rightmost(), f64::INFINITY);
        let mu = weighted(&[(0.0, 0.5), (-1.0, 3.0)]);
        assert_eq!(mu.rightmost(), rightmost_bruteforce(&mu));
        assert_eq!(mu.rightmost(), -1.0);
    }

    #[test]
    fn rightmost_small_total_mass_branch() {
        // total 0.8, threshold 0.4
        let mu = weighted(&[(-1.0, 0.5), (0.0, 0.3)]);
        assert_eq!(mu.rightmost(), rightmost_bruteforce(&mu));
        assert_eq!(mu.rightmost(), -1.0);
        let mu = weighted(&[(-1.0, 0.3), (0.0, 0.5)]);
        assert_eq!(mu.rightmost(), 0.0);
    }

    #[test]
    fn rightmost_counting_is_max_atom() {
        let mu = PointConfiguration::from_positions([-3.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(mu.rightmost(), 2.0);
    }

    #[test]
    fn pair_counting_and_density() {
        let mu = PointConfiguration::from_positions([0.0, 1.0]).unwrap();
        let ind = TestFunction::indicator("ind", 0.0, 2.0, 1.0);
        assert_eq!(mu.pair(&ind, 0.0).unwrap(), 2.0);

        let ind01 = TestFunction::indicator("ind01", 0.0, 1.0, 1.0);
        let v = PointConfiguration::empty().pair(&ind01, 1.0).unwrap();
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-10);

        let zero = TestFunction::zero();
        assert_eq!(mu.pair(&zero, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn exp_transform_examples() {
        let mu = PointConfiguration::from_positions([0.0]).unwrap();
        assert_eq!(mu.exp_transform().positions().collect::<Vec<_>>(), vec![1.0]);
        let mu = PointConfiguration::from_positions([2.0f64.ln()]).unwrap();
        assert!((mu.exp_transform().atoms()[0].position - 2.0).abs() < 1e-15);
        assert!(PointConfiguration::empty().exp_transform().is_empty());
    }

    #[test]
    fn canonicalize_merges_duplicates() {
        let split = PointConfiguration::from_positions([1.0, 1.0, 2.0]).unwrap();
        let merged = weighted(&[(1.0, 2.0), (2.0, 1.0)]);
        assert!(split.same_measure(&merged));
        assert_ne!(split, merged);
    }

    #[test]
    fn restrict_uses_half_open_window() {
        let mu = PointConfiguration::from_positions([-1.0, 0.0, 0.5, 1.0]).unwrap();
        let w = Window::new(0.0, 1.0).unwrap();
        assert_eq!(mu.restrict(w).positions().collect::<Vec<_>>(), vec![0.0, 0.5]);
        assert_eq!(mu.mass_in(&w), 2.0);
    }

    #[test]
    fn superpose_keeps_order() {
        let a = PointConfiguration::from_positions([0.0, 2.0]).unwrap();
        let b = PointConfiguration::from_positions([1.0, 3.0]).unwrap();
        let s = a.superpose(&b);
        assert_eq!(s.positions().collect::<Vec<_>>(), vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn csv_header_is_checked() {
        let bad = "pos,mass\n1,1\n";
        assert!(PointConfiguration::read_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn json_encodes_infinite_window_as_null() {
        let mu = PointConfiguration::from_positions([0.1])
            .unwrap()
            .with_window(Window::above(-2.0).unwrap());
        let s = mu.to_json().unwrap();
        assert_eq!(s, r#"{"atoms":[[0.1,1.0]],"window":[-2.0,null]}"#);
        assert_eq!(PointConfiguration::from_json(&s).unwrap(), mu);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn config() -> impl Strategy<Value = PointConfiguration> {
            prop::collection::vec((-50.0f64..50.0, 0.05f64..4.0), 1..12)
                .prop_map(|v| weighted(&v))
        }

        fn counting() -> impl Strategy<Value = PointConfiguration> {
            prop::collection::vec(-50.0f64..50.0, 1..20)
                .prop_map(|v| PointConfiguration::from_positions(v).unwrap())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn rightmost_matches_bruteforce(mu in config()) {
                prop_assert_eq!(mu.rightmost(), rightmost_bruteforce(&mu));
            }
        }

        proptest! {
            #[test]
            fn translate_composes(mu in counting(), a in -10.0f64..10.0, b in -10.0f64..10.0) {
                let two = mu.translate(a).translate(b);
                let one = mu.translate(a + b);
                for (x, y) in two.positions().zip(one.positions()) {
                    prop_assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }

            #[test]
            fn rightmost_equivariant(mu in counting(), x in -10.0f64..10.0) {
                prop_assert_eq!(mu.translate(x).rightmost(), mu.rightmost() + x);
            }

            #[test]
            fn pair_commutes_with_shift(mu in counting(), x in -5.0f64..5.0) {
                let f = TestFunction::triangle("tri", 0.5, 3.0, 2.0);
                let lhs = mu.translate(x).pair(&f, 0.0).unwrap();
                let rhs = mu.pair(&f.shifted(x), 0.0).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12);
            }

            #[test]
            fn exp_transform_intertwines_shift(mu in counting(), a in -3.0f64..3.0) {
                let lhs = mu.translate(a).exp_transform();
                let rhs = mu.exp_transform().scale_positions(a.exp());
                for (x, y) in lhs.positions().zip(rhs.positions()) {
                    prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-300));
                }
            }

            #[test]
            fn csv_and_json_roundtrip_bit_exact(mu in config()) {
                let mut buf = Vec::new();
                mu.write_csv(&mut buf).unwrap();
                let back = PointConfiguration::read_csv(buf.as_slice()).unwrap();
                prop_assert_eq!(&back, &mu);
                let back = PointConfiguration::from_json(&mu.to_json().unwrap()).unwrap();
                prop_assert_eq!(back, mu);
            }
        }
    }
}
