//! Green's functions of finite truncations, assembled from determinant
//! sequences by Cramer's rule:
//!
//!   G(n₁,n₂) = (−1)^{n₁+n₂} · D_{[0,n₁−1]} · D_{[n₂+1,N]} / D_{[0,N]}
//!
//! for n₁ ≤ n₂, where D_{[a,b]} = det[H_{[a,b]} − E] and empty blocks
//! count as 1. Everything stays in signed-log form; |G| reaches λ^N.

use super::dets::{logdet_sequence, reverse_logdet_sequence, LogDet};
use super::FiniteOperator;
use crate::error::{Error, Result};
use crate::stats::{fit_line, LineFit};

/// Signed log of G(n₁,n₂). The energy must stay off the spectrum of the
/// truncation; a zero denominator is reported as a singular energy.
pub fn greens_entry(
    op: &FiniteOperator,
    energy: f64,
    n1: usize,
    n2: usize,
) -> Result<LogDet> {
    let n = op.max_site();
    if n1 > n2 || n2 > n {
        return Err(Error::invalid(format!(
            "greens_entry: need 0 <= n1 <= n2 <= {n}, got ({n1}, {n2})"
        )));
    }
    let lead = logdet_sequence(op, energy);
    let trail = reverse_logdet_sequence(op, energy);
    entry_from_parts(&lead, &trail, n, energy, n1, n2)
}

fn entry_from_parts(
    lead: &[LogDet],
    trail: &[LogDet],
    n: usize,
    energy: f64,
    n1: usize,
    n2: usize,
) -> Result<LogDet> {
    let denom = lead[n];
    if denom.is_zero() {
        return Err(Error::SingularEnergy(format!(
            "E = {energy} is an eigenvalue of the truncation"
        )));
    }
    let left = if n1 == 0 { LogDet::ONE } else { lead[n1 - 1] };
    let right = if n2 == n { LogDet::ONE } else { trail[n2 + 1] };
    let mut g = left.mul(&right).div(&denom)?;
    if (n1 + n2) % 2 == 1 {
        g = g.negate();
    }
    Ok(g)
}

/// One column G(·, n₂) of the Green's function, in signed-log form.
pub fn greens_column(op: &FiniteOperator, energy: f64, n2: usize) -> Result<Vec<LogDet>> {
    let n = op.max_site();
    if n2 > n {
        return Err(Error::invalid(format!(
            "greens_column: column {n2} outside 0..={n}"
        )));
    }
    let lead = logdet_sequence(op, energy);
    let trail = reverse_logdet_sequence(op, energy);
    (0..=n)
        .map(|i| {
            let (a, b) = if i <= n2 { (i, n2) } else { (n2, i) };
            entry_from_parts(&lead, &trail, n, energy, a, b)
        })
        .collect()
}

/// Least-squares decay fit of log|G| against site distance.
#[derive(Debug, Clone, Copy)]
pub struct DecayFitReport {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub pairs: usize,
}

/// Fits log|G(n₁,n₂)| ~ slope·|n₁−n₂| + intercept over all site pairs in
/// `window` (inclusive). The slope is compared by callers against −L(E).
pub fn greens_decay_fit(
    op: &FiniteOperator,
    energy: f64,
    window: (usize, usize),
) -> Result<DecayFitReport> {
    let (lo, hi) = window;
    let n = op.max_site();
    if lo >= hi || hi > n {
        return Err(Error::invalid(format!(
            "greens_decay_fit: window ({lo}, {hi}) must be increasing and inside 0..={n}"
        )));
    }
    let lead = logdet_sequence(op, energy);
    let trail = reverse_logdet_sequence(op, energy);
    let mut points = Vec::new();
    for n1 in lo..=hi {
        for n2 in n1..=hi {
            let g = entry_from_parts(&lead, &trail, n, energy, n1, n2)?;
            if !g.is_zero() {
                points.push(((n2 - n1) as f64, g.log_abs));
            }
        }
    }
    let fit: LineFit = fit_line(&points).ok_or_else(|| {
        Error::invalid("greens_decay_fit: not enough finite entries in the window")
    })?;
    Ok(DecayFitReport {
        slope: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        pairs: points.len(),
    })
}
