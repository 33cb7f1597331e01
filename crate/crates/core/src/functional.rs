//! The cumulant `K(f) = -log E[exp(-⟨Z, f⟩)]`, computed two independent ways:
//! by Monte Carlo over realisations of `Z`, and from the representation
//!
//! ```text
//! K(f) = c ∫ e^{-x} f(x) dx + ∫ e^{-x} E[1 - exp(-⟨T_x D, f⟩)] dx
//! ```
//!
//! with the inner expectation over draws of the decoration.

use serde::{Deserialize, Serialize};

use crate::decoration::DecorationLaw;
use crate::error::{invalid, Error, Result};
use crate::exec::Execution;
use crate::measure::{exp_weighted_integral, Window};
use crate::quadrature;
use crate::rng::{rng_for, stream};
use crate::sampler::DpppSpec;
use crate::stats::{covariance, z_score, Accumulator};
use crate::test_function::TestFunction;

/// Replica floor for Monte Carlo cumulant estimates.
pub const MIN_REPLICAS: u64 = 1_000;

/// Per-draw quadrature tolerance in the formula route.
const DRAW_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantEstimate {
    pub value: f64,
    pub std_error: f64,
    pub replicas: u64,
    pub f_id: String,
}

fn check_covered(window: Window, f: &TestFunction) -> Result<()> {
    let s = f.support();
    if f.is_zero() || window.covers(&s) {
        return Ok(());
    }
    Err(Error::WindowTooSmall {
        f_id: f.id().to_string(),
        lo: s.lo(),
        hi: s.hi(),
        window_lo: window.lo(),
        window_hi: window.hi(),
    })
}

/// `-log` of the mean of `values` (each `exp(-⟨Z_i, f⟩)`), with the delta
/// method standard error `sd / (mean √n)`.
fn cumulant_from_laplace(values: &[f64], f_id: &str) -> CumulantEstimate {
    let acc = Accumulator::from_values(values);
    let mean = acc.mean();
    CumulantEstimate {
        value: (-mean.ln()).max(0.0),
        std_error: acc.std_error() / mean,
        replicas: acc.count(),
        f_id: f_id.to_string(),
    }
}

/// Monte Carlo estimates for several test functions from one set of
/// realisations.
pub fn estimate_cumulant_battery(
    spec: &DpppSpec,
    fs: &[TestFunction],
    replicas: u64,
    exec: Execution,
) -> Result<Vec<CumulantEstimate>> {
    if replicas < MIN_REPLICAS {
        return Err(invalid("replicas", format!("at least {MIN_REPLICAS} required")));
    }
    for f in fs {
        check_covered(spec.window, f)?;
    }
    let rows = exec.try_map(replicas, |i| {
        let z = spec.sample_replica(i)?;
        fs.iter()
            .map(|f| z.pair(f).map(|p| (-p).exp()))
            .collect::<Result<Vec<f64>>>()
    })?;
    Ok(fs
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            cumulant_from_laplace(&column, f.id())
        })
        .collect())
}

pub fn estimate_cumulant(
    spec: &DpppSpec,
    f: &TestFunction,
    replicas: u64,
    exec: Execution,
) -> Result<CumulantEstimate> {
    Ok(estimate_cumulant_battery(spec, std::slice::from_ref(f), replicas, exec)?.remove(0))
}

/// `∫ e^{-x} [1 - exp(-Σ_d f(x + d))] dx` for one decoration draw, split at
/// every point where some shifted atom crosses a breakpoint of `f`.
fn integrate_draw(atoms: &[f64], f: &TestFunction) -> Result<f64> {
    let (Some(&first), Some(&last)) = (atoms.first(), atoms.last()) else {
        return Ok(0.0);
    };
    let s = f.support();
    let (lo, hi) = (s.lo() - last, s.hi() - first);
    let breaks: Vec<f64> = atoms
        .iter()
        .flat_map(|d| f.breakpoints().iter().map(move |b| b - d))
        .collect();
    let g = |x: f64| {
        let load: f64 = atoms.iter().map(|d| f.eval(x + d)).sum();
        -(-load).exp_m1() * (-x).exp()
    };
    quadrature::integrate_pieces(&g, lo, hi, &breaks, DRAW_TOL)
}

/// Evaluates the representation formula for `(c, D)` on `f`. The outer
/// `x`-integral is done exactly per decoration draw (piecewise adaptive
/// quadrature) and averaged over `mc_inner` draws.
pub fn eval_cumulant_formula(
    density_coeff: f64,
    decoration: &DecorationLaw,
    f: &TestFunction,
    mc_inner: u64,
    seed: u64,
    exec: Execution,
) -> Result<CumulantEstimate> {
    if mc_inner == 0 {
        return Err(invalid("mc_inner", "must be positive"));
    }
    if f.is_zero() {
        return Ok(CumulantEstimate {
            value: 0.0,
            std_error: 0.0,
            replicas: mc_inner,
            f_id: f.id().to_string(),
        });
    }
    let s = f.support();
    if !s.is_bounded() {
        return Err(Error::NonIntegrable {
            lo: s.lo(),
            hi: s.hi(),
        });
    }
    let first = if density_coeff > 0.0 {
        density_coeff * exp_weighted_integral(f)?
    } else {
        0.0
    };
    let ub = decoration.upper_bound();
    if ub == f64::INFINITY {
        return Err(Error::UnboundedDecoration(decoration.name().to_string()));
    }
    if ub == f64::NEG_INFINITY {
        return Ok(CumulantEstimate {
            value: first,
            std_error: 0.0,
            replicas: mc_inner,
            f_id: f.id().to_string(),
        });
    }
    // Anchors below a - UB - TAIL contribute at most e^{-(a - UB)} e^{-TAIL}
    // relative mass; only laws with infinitely many atoms need the cut.
    const TAIL: f64 = 40.0;
    let floor = if decoration.has_finite_atoms() {
        f64::NEG_INFINITY
    } else {
        s.lo() - (s.lo() - ub + TAIL)
    };
    let values = exec.try_map(mc_inner, |j| {
        let mut rng = rng_for(seed, stream::FORMULA, j);
        let d = decoration.sample(&mut rng, floor)?;
        let atoms: Vec<f64> = d.positions().collect();
        integrate_draw(&atoms, f)
    })?;
    let acc = Accumulator::from_values(&values);
    Ok(CumulantEstimate {
        value: first + acc.mean(),
        std_error: acc.std_error(),
        replicas: mc_inner,
        f_id: f.id().to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueSe {
    pub value: f64,
    pub se: f64,
}

impl From<&CumulantEstimate> for ValueSe {
    fn from(e: &CumulantEstimate) -> Self {
        ValueSe {
            value: e.value,
            se: e.std_error,
        }
    }
}

/// One row of the Monte Carlo vs formula comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulantComparison {
    pub f_id: String,
    pub mc: ValueSe,
    pub formula: ValueSe,
    pub z: f64,
}

impl CumulantComparison {
    pub fn agrees(&self, sigmas: f64) -> bool {
        self.z.abs() <= sigmas
    }
}

/// Both routes over a battery; the routes use disjoint random streams.
pub fn compare_cumulants(
    spec: &DpppSpec,
    fs: &[TestFunction],
    replicas: u64,
    mc_inner: u64,
    exec: Execution,
) -> Result<Vec<CumulantComparison>> {
    let mc = estimate_cumulant_battery(spec, fs, replicas, exec)?;
    fs.iter()
        .zip(mc)
        .map(|(f, mc)| {
            let formula = eval_cumulant_formula(
                spec.density_coeff,
                &spec.decoration,
                f,
                mc_inner,
                spec.seed,
                exec,
            )?;
            let z = z_score(
                mc.value - formula.value,
                mc.std_error.powi(2) + formula.std_error.powi(2),
            );
            Ok(CumulantComparison {
                f_id: f.id().to_string(),
                mc: (&mc).into(),
                formula: (&formula).into(),
                z,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityRow {
    pub shift: f64,
    /// `K̂(f(· + x))`.
    pub shifted: f64,
    /// `e^x K̂(f)`.
    pub scaled: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomogeneityReport {
    pub f_id: String,
    pub replicas: u64,
    pub rows: Vec<HomogeneityRow>,
}

/// Checks `K(f(· + x)) = e^x K(f)` for each shift. Both sides use the same
/// realisations; the z-score accounts for their covariance, so `x = 0` gives
/// exactly `z = 0`.
pub fn homogeneity_check(
    spec: &DpppSpec,
    f: &TestFunction,
    shifts: &[f64],
    replicas: u64,
    exec: Execution,
) -> Result<HomogeneityReport> {
    if replicas < MIN_REPLICAS {
        return Err(invalid("replicas", format!("at least {MIN_REPLICAS} required")));
    }
    let mut fs = vec![f.clone()];
    fs.extend(shifts.iter().map(|&x| f.shifted(x)));
    for g in &fs {
        check_covered(spec.window, g)?;
    }
    let rows = exec.try_map(replicas, |i| {
        let z = spec.sample_replica(i)?;
        fs.iter()
            .map(|g| z.pair(g).map(|p| (-p).exp()))
            .collect::<Result<Vec<f64>>>()
    })?;
    let column = |k: usize| -> Vec<f64> { rows.iter().map(|r| r[k]).collect() };
    let base = column(0);
    let base_acc = Accumulator::from_values(&base);
    let n = replicas as f64;
    let out = shifts
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let col = column(k + 1);
            let acc = Accumulator::from_values(&col);
            let (m1, m0) = (acc.mean(), base_acc.mean());
            let k1 = -m1.ln();
            let k0 = -m0.ln();
            let ex = x.exp();
            let var = (acc.variance() / (m1 * m1) + ex * ex * base_acc.variance() / (m0 * m0)
                - 2.0 * ex * covariance(&col, &base) / (m1 * m0))
                / n;
            HomogeneityRow {
                shift: x,
                shifted: k1,
                scaled: ex * k0,
                z: z_score(k1 - ex * k0, var.max(0.0)),
            }
        })
        .collect();
    Ok(HomogeneityReport {
        f_id: f.id().to_string(),
        replicas,
        rows: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoration::{builtin_battery, DecorationSpec};
    use crate::test_function::standard_battery;

    /// Poisson closed form: `∫ e^{-x} (1 - e^{-f(x)}) dx`.
    fn poisson_cumulant(f: &TestFunction) -> f64 {
        let g = |x: f64| (-x).exp() * -(-f.eval(x)).exp_m1();
        quadrature::integrate_pieces(&g, f.support().lo(), f.support().hi(), f.breakpoints(), 1e-13)
            .unwrap()
    }

    fn spec(d: DecorationLaw, c: f64, lo: f64, seed: u64) -> DpppSpec {
        DpppSpec::new(d, c, Window::above(lo).unwrap(), seed).unwrap()
    }

    #[test]
    fn closed_form_reference_value() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        let expected = (1.0 - (-1.0f64).exp()).powi(2);
        assert!((poisson_cumulant(&f) - expected).abs() < 1e-12);
        assert!((expected - 0.39958).abs() < 1e-5);
    }

    #[test]
    fn zero_function_has_zero_cumulant() {
        let sp = spec(DecorationLaw::dirac0(), 1.0, -2.0, 1);
        let k = estimate_cumulant(&sp, &TestFunction::zero(), 1000, Execution::Parallel).unwrap();
        assert_eq!(k.value, 0.0);
        assert_eq!(k.std_error, 0.0);
        for d in builtin_battery() {
            let k = eval_cumulant_formula(0.7, &d, &TestFunction::zero(), 10, 1, Execution::Sequential)
                .unwrap();
            assert_eq!(k.value, 0.0);
        }
    }

    #[test]
    fn formula_dirac0_is_exact() {
        for f in standard_battery() {
            let k = eval_cumulant_formula(0.0, &DecorationLaw::dirac0(), &f, 3, 0, Execution::Sequential)
                .unwrap();
            assert!((k.value - poisson_cumulant(&f)).abs() < 1e-9, "{}", f.id());
            assert!(k.std_error < 1e-12);
        }
    }

    #[test]
    fn formula_null_decoration_keeps_density_term() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        let null = DecorationSpec::named("null").build().unwrap();
        let k = eval_cumulant_formula(1.0, &null, &f, 10, 0, Execution::Sequential).unwrap();
        assert!((k.value - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn mc_density_only() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        let null = DecorationSpec::named("null").build().unwrap();
        let k = estimate_cumulant(&spec(null, 1.0, 0.0, 3), &f, 1000, Execution::Parallel).unwrap();
        assert!((k.value - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn mc_matches_poisson_closed_form() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        let k = estimate_cumulant(&spec(DecorationLaw::dirac0(), 0.0, 0.0, 12), &f, 100_000, Execution::Parallel)
            .unwrap();
        let expected = (1.0 - (-1.0f64).exp()).powi(2);
        assert!((k.value - expected).abs() < 3.0 * k.std_error, "{k:?}");
    }

    #[test]
    fn window_must_cover_support() {
        let f = TestFunction::indicator("ind", -1.0, 1.0, 1.0);
        let r = estimate_cumulant(&spec(DecorationLaw::dirac0(), 0.0, 0.0, 1), &f, 1000, Execution::Parallel);
        assert!(matches!(r, Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn replica_floor_enforced() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        assert!(estimate_cumulant(&spec(DecorationLaw::dirac0(), 0.0, 0.0, 1), &f, 999, Execution::Parallel)
            .is_err());
    }

    #[test]
    fn superposition_doubles_formula() {
        // Z + Z' is the DPPP with decoration law doubled in mass, i.e. the
        // same decoration anchored at intensity 2 e^{-x} = e^{-(x - log 2)}.
        let d = DecorationSpec::named("staircase").build().unwrap();
        let f = TestFunction::triangle("t", 0.0, 1.0, 1.0);
        let one = eval_cumulant_formula(0.3, &d, &f, 5, 0, Execution::Sequential).unwrap();
        let two = eval_cumulant_formula(
            0.6,
            &d.shifted(std::f64::consts::LN_2),
            &f,
            5,
            0,
            Execution::Sequential,
        )
        .unwrap();
        assert!((two.value - 2.0 * one.value).abs() < 1e-9);
    }

    #[test]
    fn homogeneity_zero_shift_is_exact() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        let r = homogeneity_check(&spec(DecorationLaw::dirac0(), 0.0, -2.0, 4), &f, &[0.0], 2000, Execution::Parallel)
            .unwrap();
        assert_eq!(r.rows[0].z, 0.0);
        assert_eq!(r.rows[0].shifted, r.rows[0].scaled);
    }

    #[test]
    fn homogeneity_closed_form_half() {
        let f = TestFunction::indicator("ind", 0.0, 1.0, 1.0);
        let x = -std::f64::consts::LN_2;
        assert!((poisson_cumulant(&f.shifted(x)) - 0.5 * poisson_cumulant(&f)).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_f() {
        let small = TestFunction::indicator("s", 0.0, 1.0, 0.5);
        let big = TestFunction::indicator("b", -1.0, 2.0, 1.0);
        let d = DecorationSpec::named("finite-cluster").build().unwrap();
        let ks = eval_cumulant_formula(0.0, &d, &small, 5000, 1, Execution::Parallel).unwrap();
        let kb = eval_cumulant_formula(0.0, &d, &big, 5000, 1, Execution::Parallel).unwrap();
        assert!(kb.value - ks.value > 3.0 * (ks.std_error + kb.std_error));
    }
}
