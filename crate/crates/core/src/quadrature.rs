//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::error::{Error, Result};
use crate::test_function::TestFunction;

/// Absolute tolerance used for the density term of a pairing.
pub const ABS_TOL: f64 = 1e-10;

const MAX_DEPTH: u32 = 40;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod rule on `[a, b]`: (estimate, error estimate).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive bisection until each panel meets its share of `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let (v, err) = gk15(f, a, b);
    recurse(f, a, b, v, err, abs_tol, 0)
}

fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    whole: f64,
    err: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    if err <= tol.max(f64::EPSILON * whole.abs()) {
        return Ok(whole);
    }
    if depth >= MAX_DEPTH || !whole.is_finite() {
        return Err(Error::NonIntegrable { lo: a, hi: b });
    }
    let m = 0.5 * (a + b);
    let (l, el) = gk15(f, a, m);
    let (r, er) = gk15(f, m, b);
    Ok(recurse(f, a, m, l, el, tol / 2.0, depth + 1)?
        + recurse(f, m, b, r, er, tol / 2.0, depth + 1)?)
}

/// Integrates over `[a, b]` split at every breakpoint strictly inside.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
) -> Result<f64> {
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&x| x > a && x < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let n = (cuts.len() - 1).max(1) as f64;
    cuts.windows(2)
        .map(|w| integrate(f, w[0], w[1], abs_tol / n))
        .sum()
}

/// `∫ f(x) e^{-x} dx` over the support of `f`. An infinite end is handled by
/// doubling a finite cut-off until the added piece drops below tolerance.
pub fn integrate_exp_weighted(f: &TestFunction) -> Result<f64> {
    let support = f.support();
    let g = |x: f64| f.eval(x) * (-x).exp();
    let (lo, hi) = (support.lo(), support.hi());
    let bp = f.breakpoints();
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => integrate_pieces(&g, lo, hi, bp, ABS_TOL),
        (false, true) => {
            let anchor = bp.iter().copied().filter(|x| *x < hi).fold(hi, f64::min);
            let mut total = integrate_pieces(&g, anchor, hi, bp, ABS_TOL / 2.0)?;
            let mut edge = anchor;
            let mut step = 1.0;
            for _ in 0..60 {
                let piece = integrate(&g, edge - step, edge, ABS_TOL / 4.0)?;
                total += piece;
                edge -= step;
                step *= 2.0;
                if piece.abs() < ABS_TOL {
                    return Ok(total);
                }
            }
            Err(Error::NonIntegrable {
                lo: f64::NEG_INFINITY,
                hi,
            })
        }
        (true, false) => {
            let anchor = bp.iter().copied().filter(|x| *x > lo).fold(lo, f64::max);
            let mut total = integrate_pieces(&g, lo, anchor, bp, ABS_TOL / 2.0)?;
            let mut edge = anchor;
            let mut step = 1.0;
            for _ in 0..60 {
                let piece = integrate(&g, edge, edge + step, ABS_TOL / 4.0)?;
                total += piece;
                edge += step;
                step *= 2.0;
                if piece.abs() < ABS_TOL && (-edge).exp() < ABS_TOL {
                    return Ok(total);
                }
            }
            Err(Error::NonIntegrable {
                lo,
                hi: f64::INFINITY,
            })
        }
        (false, false) => Err(Error::NonIntegrable { lo, hi }),
    }
}
