//! Determinant sequences of tridiagonal truncations in signed-log form.
//!
//! det[H_{[0,k]} − E] follows the three-term recurrence
//! d_k = (v_k − E)·d_{k−1} − d_{k−2} with d_{−1} = 1, d_{−2} = 0; values
//! reach λ^N and overflow f64 near N ≈ 150 at λ = 100, so the recurrence
//! carries a shared power-of-two scale that is renormalized on the fly.

use super::FiniteOperator;
use crate::cocycle::{cocycle_product, SL2Matrix};
use crate::error::{Error, Result};
use crate::phase::DyadicPhase;
use crate::potential::SamplingFunction;

/// A determinant stored as (sign, log of absolute value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDet {
    pub sign: i8,
    pub log_abs: f64,
}

impl LogDet {
    pub const ONE: Self = Self {
        sign: 1,
        log_abs: 0.0,
    };

    pub const ZERO: Self = Self {
        sign: 0,
        log_abs: f64::NEG_INFINITY,
    };

    pub fn from_value(v: f64) -> Self {
        if v == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: if v > 0.0 { 1 } else { -1 },
                log_abs: v.abs().ln(),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn mul(&self, rhs: &Self) -> Self {
        if self.is_zero() || rhs.is_zero() {
            Self::ZERO
        } else {
            Self {
                sign: self.sign * rhs.sign,
                log_abs: self.log_abs + rhs.log_abs,
            }
        }
    }

    pub fn div(&self, rhs: &Self) -> Result<Self> {
        if rhs.is_zero() {
            return Err(Error::SingularEnergy(
                "division by a zero determinant".into(),
            ));
        }
        if self.is_zero() {
            return Ok(Self::ZERO);
        }
        Ok(Self {
            sign: self.sign * rhs.sign,
            log_abs: self.log_abs - rhs.log_abs,
        })
    }

    pub fn negate(&self) -> Self {
        Self {
            sign: -self.sign,
            log_abs: self.log_abs,
        }
    }

    /// The plain value; may overflow to ±inf for large log_abs.
    pub fn to_f64(&self) -> f64 {
        self.sign as f64 * self.log_abs.exp()
    }
}

const RESCALE_LIMIT: f64 = 1e150;

fn rescale(pair: &mut (f64, f64), scale: &mut f64) {
    let mag = pair.0.abs().max(pair.1.abs());
    if mag > RESCALE_LIMIT || (mag > 0.0 && mag < 1.0 / RESCALE_LIMIT) {
        pair.0 /= mag;
        pair.1 /= mag;
        *scale += mag.ln();
    }
}

/// D_k = det[H_{[0,k]} − E] for k = 0…N.
pub fn logdet_sequence(op: &FiniteOperator, energy: f64) -> Vec<LogDet> {
    let mut out = Vec::with_capacity(op.sites());
    let mut pair = (1.0f64, 0.0f64); // (d_{k-1}, d_{k-2}) scaled
    let mut scale = 0.0f64;
    for &v in op.diagonal() {
        let next = (v - energy) * pair.0 - pair.1;
        pair = (next, pair.0);
        rescale(&mut pair, &mut scale);
        out.push(if pair.0 == 0.0 {
            LogDet::ZERO
        } else {
            LogDet {
                sign: if pair.0 > 0.0 { 1 } else { -1 },
                log_abs: pair.0.abs().ln() + scale,
            }
        });
    }
    out
}

/// Trailing minors R_k = det[H_{[k,N]} − E] for k = 0…N.
pub fn reverse_logdet_sequence(op: &FiniteOperator, energy: f64) -> Vec<LogDet> {
    let n = op.sites();
    let mut out = vec![LogDet::ZERO; n];
    let mut pair = (1.0f64, 0.0f64);
    let mut scale = 0.0f64;
    for k in (0..n).rev() {
        let next = (op.diagonal()[k] - energy) * pair.0 - pair.1;
        pair = (next, pair.0);
        rescale(&mut pair, &mut scale);
        out[k] = if pair.0 == 0.0 {
            LogDet::ZERO
        } else {
            LogDet {
                sign: if pair.0 > 0.0 { 1 } else { -1 },
                log_abs: pair.0.abs().ln() + scale,
            }
        };
    }
    out
}

/// Which starting site makes the determinant representation of the
/// cocycle product come out exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetOffset {
    /// Truncations start their potential at f(x).
    AtX,
    /// Truncations start their potential at f(Tx).
    AtTx,
}

impl DetOffset {
    pub fn as_u8(&self) -> u8 {
        match self {
            DetOffset::AtX => 0,
            DetOffset::AtTx => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DetIdentity {
    pub offset: DetOffset,
    /// Max entrywise deviation of the matching convention, relative to the
    /// largest matrix entry.
    pub max_error: f64,
    /// Same deviation for the rejected convention.
    pub other_residual: f64,
}

/// det(E·I − H over `m` sites starting at phase y), as a plain f64
/// (caller keeps m ≤ ~30 and moderate λ so this stays in range).
fn char_det(
    y: &DyadicPhase,
    lambda: f64,
    f: &SamplingFunction,
    m: usize,
    energy: f64,
) -> Result<f64> {
    if m == 0 {
        return Ok(1.0);
    }
    let op = FiniteOperator::build(y, lambda, f, m - 1)?;
    let d = logdet_sequence(&op, energy)[m - 1];
    // det(EI - H) = (-1)^m det(H - E)
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(sign * d.to_f64())
}

/// 2×2 matrix of characteristic determinants with truncations rooted at
/// phase y: [[D_n(y), −D_{n−1}(Ty)], [D_{n−1}(y), −D_{n−2}(Ty)]].
fn det_matrix(
    y: &DyadicPhase,
    lambda: f64,
    f: &SamplingFunction,
    n: usize,
    energy: f64,
) -> Result<SL2Matrix> {
    let ty = y.double(1)?;
    Ok(SL2Matrix::new(
        char_det(y, lambda, f, n, energy)?,
        -char_det(&ty, lambda, f, n.saturating_sub(1), energy)?,
        char_det(y, lambda, f, n - 1, energy)?,
        if n >= 2 {
            -char_det(&ty, lambda, f, n - 2, energy)?
        } else {
            0.0
        },
    ))
}

fn matrix_deviation(m: &SL2Matrix, a: &SL2Matrix) -> f64 {
    let scale = a.max_abs_entry().max(1.0);
    let d = (m.a11 - a.a11)
        .abs()
        .max((m.a12 - a.a12).abs())
        .max((m.a21 - a.a21).abs())
        .max((m.a22 - a.a22).abs());
    d / scale
}

/// Resolves the indexing convention of the determinant representation of
/// the n-step cocycle product empirically: the product over sites
/// Tx, …, Tⁿx is compared against determinant matrices rooted at x and at
/// Tx, and the convention that matches to 1e-8 wins. Neither matching is
/// a transcription bug and comes back as an error.
pub fn verify_det_identity(
    x: &DyadicPhase,
    lambda: f64,
    f: &SamplingFunction,
    energy: f64,
    n: usize,
) -> Result<DetIdentity> {
    if n == 0 {
        return Err(Error::invalid("verify_det_identity: need n >= 1"));
    }
    if n > 30 {
        return Err(Error::invalid(
            "verify_det_identity: exact-oracle regime is n <= 30",
        ));
    }
    let product = cocycle_product(x, energy, lambda, f, n)?;
    let a = product.unit().scale(product.log_scale().exp());
    if !a.max_abs_entry().is_finite() {
        return Err(Error::invalid(
            "verify_det_identity: product overflows f64; reduce n or lambda",
        ));
    }
    let m_at_x = det_matrix(x, lambda, f, n, energy)?;
    let m_at_tx = det_matrix(&x.double(1)?, lambda, f, n, energy)?;
    let err_x = matrix_deviation(&m_at_x, &a);
    let err_tx = matrix_deviation(&m_at_tx, &a);
    let (offset, max_error, other_residual) = if err_tx <= err_x {
        (DetOffset::AtTx, err_tx, err_x)
    } else {
        (DetOffset::AtX, err_x, err_tx)
    };
    if max_error > 1e-8 {
        return Err(Error::invalid(format!(
            "verify_det_identity: neither convention matches (errors {err_x:.3e} at x, {err_tx:.3e} at Tx)"
        )));
    }
    Ok(DetIdentity {
        offset,
        max_error,
        other_residual,
    })
}
