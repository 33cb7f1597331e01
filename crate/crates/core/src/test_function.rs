//! Non-negative test functions and the fixed battery used for cumulant
//! comparisons.

use std::fmt;
use std::sync::Arc;

use crate::measure::Window;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayClass {
    CompactSupport,
    /// Bounded, vanishing to the right of a finite point, and decaying on the
    /// left fast enough to be integrable against `e^{-x} dx`.
    BoundedWithLeftDecay,
}

type EvalFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A function `f : ℝ → ℝ₊` with a declared support and the points where it
/// fails to be smooth (used to split quadrature panels).
#[derive(Clone)]
pub struct TestFunction {
    id: String,
    eval: Arc<EvalFn>,
    support: Window,
    decay: DecayClass,
    breakpoints: Vec<f64>,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("id", &self.id)
            .field("support", &self.support)
            .field("decay", &self.decay)
            .finish()
    }
}

impl TestFunction {
    pub fn custom(
        id: &str,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: Window,
        decay: DecayClass,
        breakpoints: Vec<f64>,
    ) -> Self {
        TestFunction {
            id: id.to_string(),
            eval: Arc::new(eval),
            support,
            decay,
            breakpoints,
        }
    }

    /// `height · 𝟙[a, b]`.
    pub fn indicator(id: &str, a: f64, b: f64, height: f64) -> Self {
        assert!(a < b && height >= 0.0);
        Self::custom(
            id,
            move |x| if a <= x && x <= b { height } else { 0.0 },
            Window::new(a, b).expect("a < b"),
            DecayClass::CompactSupport,
            vec![a, b],
        )
    }

    /// Tent of the given height centred at `center`, vanishing outside
    /// `center ± half_width`.
    pub fn triangle(id: &str, center: f64, half_width: f64, height: f64) -> Self {
        assert!(half_width > 0.0 && height >= 0.0);
        let (a, b) = (center - half_width, center + half_width);
        Self::custom(
            id,
            move |x| (height * (1.0 - (x - center).abs() / half_width)).max(0.0),
            Window::new(a, b).expect("half_width > 0"),
            DecayClass::CompactSupport,
            vec![a, center, b],
        )
    }

    /// `f ≡ 0`.
    pub fn zero() -> Self {
        Self::custom(
            "zero",
            |_| 0.0,
            Window::new(0.0, 1.0).expect("valid"),
            DecayClass::CompactSupport,
            vec![],
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.eval)(x)
    }

    pub fn support(&self) -> Window {
        self.support
    }

    pub fn decay(&self) -> DecayClass {
        self.decay
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// True when the function is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        self.id == "zero"
    }

    /// `y ↦ f(y + x)`; the support moves by `-x`.
    pub fn shifted(&self, x: f64) -> Self {
        let inner = Arc::clone(&self.eval);
        TestFunction {
            id: format!("{}@{:+}", self.id, x),
            eval: Arc::new(move |y| inner(y + x)),
            support: self.support.translate(-x),
            decay: self.decay,
            breakpoints: self.breakpoints.iter().map(|b| b - x).collect(),
        }
    }
}

/// Fixed battery of five indicators and two tents, all supported in `[-2, 3]`.
pub fn standard_battery() -> Vec<TestFunction> {
    vec![
        TestFunction::indicator("ind[0,1]", 0.0, 1.0, 1.0),
        TestFunction::indicator("ind[-1,0]", -1.0, 0.0, 1.0),
        TestFunction::indicator("ind[1,3]", 1.0, 3.0, 1.0),
        TestFunction::indicator("half*ind[-2,2]", -2.0, 2.0, 0.5),
        TestFunction::indicator("2*ind[0.5,1.5]", 0.5, 1.5, 2.0),
        TestFunction::triangle("tri(0,1)", 0.0, 1.0, 1.0),
        TestFunction::triangle("tri(1,1.5)", 1.0, 1.5, 0.7),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shifted_evaluates_at_offset() {
        let f = TestFunction::indicator("i", 0.0, 1.0, 1.0);
        let g = f.shifted(1.0);
        assert_eq!(g.eval(-0.5), 1.0);
        assert_eq!(g.eval(0.5), 0.0);
        assert_eq!(g.support().lo(), -1.0);
        assert_eq!(g.support().hi(), 0.0);
    }

    #[test]
    fn battery_is_nonnegative_and_compact() {
        let battery = standard_battery();
        assert_eq!(battery.len(), 7);
        for f in &battery {
            assert_eq!(f.decay(), DecayClass::CompactSupport);
            assert!(f.support().lo() >= -2.0 && f.support().hi() <= 3.0);
            for k in -400..=400 {
                let x = k as f64 / 100.0;
                let v = f.eval(x);
                assert!(v >= 0.0);
                if !(f.support().lo() <= x && x <= f.support().hi()) {
                    assert_eq!(v, 0.0, "{} at {}", f.id(), x);
                }
            }
        }
    }

    #[test]
    fn triangle_peak() {
        let t = TestFunction::triangle("t", 1.0, 2.0, 3.0);
        assert_eq!(t.eval(1.0), 3.0);
        assert_eq!(t.eval(3.0), 0.0);
        assert!((t.eval(2.0) - 1.5).abs() < 1e-15);
    }
}
