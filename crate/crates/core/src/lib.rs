//! Finite-horizon numerics for smooth torus dynamics: exterior-power
//! Lyapunov-exponent estimators, bounded-geometry subdivision trees for
//! embedded k-disks, Pliss/hyperbolic-time selection, and finite-stage
//! measured-disk constructions with conditional-density diagnostics.

pub mod disktree;
pub mod exponents;
pub mod exterior;
pub mod linalg;
pub mod systems;

pub use exterior::{ExteriorMatrix, KFrame, Subspace};
pub use linalg::Mat;
pub use systems::{Jacobian, SmoothSystem, TorusPoint};
