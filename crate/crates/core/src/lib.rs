//! Simulation and statistical verification of exponentially 1-stable point
//! processes and random measures on the real line.
//!
//! The central object is the decorated Poisson point process
//! `Z = Σ_i T_{ξ_i} D_i`, where `ξ_i` are the atoms of a Poisson process with
//! intensity `e^{-x} dx` and `D_i` are iid copies of a decoration `D`. The
//! crate samples it exactly on a window, estimates its cumulant
//! `K(f) = -log E[exp(-⟨Z, f⟩)]` two independent ways, tests
//! `Z =_d T_α Z + T_β Z'` for `e^α + e^β = 1`, normalizes decorations to the
//! canonical form with rightmost atom at 0, and simulates branching Brownian
//! motion as an end-to-end source of such processes.

pub mod bbm;
pub mod decoration;
pub mod error;
pub mod exec;
pub mod functional;
pub mod measure;
pub mod model;
pub mod normalize;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod stability;
pub mod stats;
pub mod test_function;

pub use decoration::{DecorationLaw, DecorationSpec};
pub use error::{Error, Result};
pub use exec::Execution;
pub use measure::{Atom, PointConfiguration, Window};
pub use model::Model;
pub use sampler::{DpppSpec, RandomMeasureSample};
pub use test_function::TestFunction;
