//! Numerical laboratory for Schrödinger operators on ℓ²(ℕ) whose potential
//! is generated by the doubling map T(x) = 2x mod 1:
//!
//!   (H(x)u)ₙ = uₙ₊₁ + uₙ₋₁ + λ·f(Tⁿx)·uₙ,  u₋₁ = 0.
//!
//! The crate provides exact dyadic phases (so long orbits keep full
//! precision), the transfer-matrix cocycle and its polar-coordinate form,
//! Lyapunov-exponent estimators, large-deviation statistics, Green's
//! functions in signed-log arithmetic, and eigenfunction-localization
//! diagnostics, together with a deterministic batch CLI.

pub mod cocycle;
pub mod config;
pub mod error;
pub mod ldt;
pub mod lyapunov;
pub mod phase;
pub mod potential;
pub mod run;
pub mod selftest;
pub mod spectrum;
pub mod stats;
pub mod sweep;

pub use error::{Error, Result};
