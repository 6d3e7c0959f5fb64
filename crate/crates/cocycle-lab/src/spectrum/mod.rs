//! Finite-volume operators H_Λ(x) and their spectral diagnostics:
//! determinant sequences in signed-log form, Sturm-bisection eigenvalues,
//! inverse-iteration eigenvectors, Green's functions assembled by Cramer's
//! rule, localization statistics, the integrated density of states with
//! its Thouless-formula consistency check, and the scaled-down
//! double-resonance scan.

mod dets;
mod eigen;
mod green;
mod localize;
mod resonance;

pub use dets::{logdet_sequence, reverse_logdet_sequence, verify_det_identity, DetIdentity, LogDet};
pub use eigen::{eigenvalues, eigenvector, sturm_count, EigenPair};
pub use green::{greens_column, greens_decay_fit, greens_entry, DecayFitReport};
pub use localize::{
    decay_rate_from_vector, ids_estimate, localization_report, thouless_residual, LocalizationRow,
};
pub use resonance::{
    double_resonance_scan, good_set_check, GoodSetCheck, ResonanceConfig, ResonanceHit,
    ResonanceScan,
};

use crate::error::{Error, Result};
use crate::phase::{DyadicPhase, F64_DIGITS, GUARD_BITS};
use crate::potential::SamplingFunction;

/// A symmetric tridiagonal truncation of H(x): diagonal λ·f(Tⁿx) for
/// n = 0…N, unit off-diagonals.
#[derive(Debug, Clone)]
pub struct FiniteOperator {
    diagonal: Vec<f64>,
    lambda: f64,
    origin: DyadicPhase,
}

impl FiniteOperator {
    /// Truncation over sites 0…`size_n`, so `size_n + 1` sites in total.
    pub fn build(
        x: &DyadicPhase,
        lambda: f64,
        f: &SamplingFunction,
        size_n: usize,
    ) -> Result<Self> {
        if x.remaining_bits() < size_n + GUARD_BITS {
            return Err(Error::PrecisionExhausted {
                needed: size_n + GUARD_BITS,
                available: x.remaining_bits(),
            });
        }
        if let Some(k) = x.zero_hit_within(size_n) {
            log::warn!(
                "finite operator orbit reaches the discontinuity point 0 at site {k}; \
                 the diagonal tail is lambda*f(0) = 0"
            );
        }
        let mut diagonal = Vec::with_capacity(size_n + 1);
        let mut y = x.clone();
        diagonal.push(lambda * f.eval(y.to_real(F64_DIGITS.min(y.remaining_bits()))?)?);
        for _ in 0..size_n {
            y = y.double(1)?;
            diagonal.push(lambda * f.eval(y.to_real(F64_DIGITS)?)?);
        }
        Ok(Self {
            diagonal,
            lambda,
            origin: x.clone(),
        })
    }

    /// Direct construction from a diagonal (test oracles, synthetic cases).
    pub fn from_diagonal(diagonal: Vec<f64>, lambda: f64, origin: DyadicPhase) -> Self {
        assert!(!diagonal.is_empty());
        Self {
            diagonal,
            lambda,
            origin,
        }
    }

    /// Number of sites N+1.
    pub fn sites(&self) -> usize {
        self.diagonal.len()
    }

    /// Largest site index N.
    pub fn max_site(&self) -> usize {
        self.diagonal.len() - 1
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn origin(&self) -> &DyadicPhase {
        &self.origin
    }

    /// Gershgorin bound on the spectrum: [min v − 2, max v + 2].
    pub fn spectrum_bounds(&self) -> (f64, f64) {
        let lo = self.diagonal.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self
            .diagonal
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        (lo - 2.0, hi + 2.0)
    }

    /// y = (H − shift)·u.
    pub fn apply_shifted(&self, shift: f64, u: &[f64]) -> Vec<f64> {
        let n = self.sites();
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut acc = (self.diagonal[i] - shift) * u[i];
            if i > 0 {
                acc += u[i - 1];
            }
            if i + 1 < n {
                acc += u[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    /// Operator-norm bound max|v| + 2 used for residual scales.
    pub fn norm_bound(&self) -> f64 {
        self.diagonal.iter().fold(0.0f64, |a, &v| a.max(v.abs())) + 2.0
    }
}

/// Convenience free function mirroring the operator constructor.
pub fn build_finite(
    x: &DyadicPhase,
    lambda: f64,
    f: &SamplingFunction,
    size_n: usize,
) -> Result<FiniteOperator> {
    FiniteOperator::build(x, lambda, f, size_n)
}
