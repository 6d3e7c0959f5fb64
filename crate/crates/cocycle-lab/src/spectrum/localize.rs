//! Eigenfunction localization statistics, the integrated density of
//! states, and the Thouless-formula consistency check.

use super::eigen::{eigenvalues, eigenvector, sturm_count};
use super::FiniteOperator;
use crate::error::{Error, Result};
use crate::lyapunov::ensemble_phase;
use crate::phase::GUARD_BITS;
use crate::potential::SamplingFunction;
use crate::stats::fit_line;

/// Per-eigenpair localization diagnostics.
#[derive(Debug, Clone)]
pub struct LocalizationRow {
    pub eigenvalue: f64,
    /// Exponential decay rate of |u| away from its peak (NaN when the
    /// usable window is too short to fit).
    pub gamma: f64,
    /// Site of the largest |u_n|.
    pub center: usize,
    /// Inverse participation ratio Σ u⁴ of the unit vector.
    pub ipr: f64,
}

/// Decay rate and center of a single normalized vector: the least-squares
/// slope of log|u_n| against |n − center|, over sites that keep 10% of
/// each boundary excluded and |u_n| above a relative noise floor.
pub fn decay_rate_from_vector(u: &[f64], boundary_fraction: f64) -> (f64, usize) {
    let n = u.len();
    let center = u
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let peak = u[center].abs();
    // Inverse iteration resolves the true exponential tail only down to a
    // rounding-noise plateau (empirically ~1e-12 of the peak for strongly
    // localized states); sites below this floor are flat noise and must
    // not enter the fit or they drag the slope to zero.
    let floor = peak * 1e-10;
    let skip = ((n as f64) * boundary_fraction).ceil() as usize;
    let mut points = Vec::new();
    for (i, &ui) in u.iter().enumerate().take(n - skip).skip(skip) {
        if ui.abs() > floor {
            points.push(((i as f64 - center as f64).abs(), ui.abs().ln()));
        }
    }
    match fit_line(&points) {
        Some(fit) if points.len() >= 3 => (-fit.slope, center),
        _ => (f64::NAN, center),
    }
}

/// Full eigensystem of one sampled operator with decay rate, center, and
/// inverse participation ratio per eigenpair.
pub fn localization_report(
    x: &crate::phase::DyadicPhase,
    lambda: f64,
    f: &SamplingFunction,
    size_n: usize,
    seed: u64,
) -> Result<Vec<LocalizationRow>> {
    if size_n < 50 {
        return Err(Error::invalid(
            "localization_report: need N >= 50 for meaningful decay fits",
        ));
    }
    let op = FiniteOperator::build(x, lambda, f, size_n)?;
    let evs = eigenvalues(&op, 1e-10)?;
    let mut rows = Vec::with_capacity(evs.len());
    for (k, &e) in evs.iter().enumerate() {
        let pair = eigenvector(&op, e, 1e-10, seed.wrapping_add(k as u64))?;
        let (gamma, center) = decay_rate_from_vector(&pair.vector, 0.1);
        let ipr = pair.vector.iter().map(|v| v.powi(4)).sum();
        rows.push(LocalizationRow {
            eigenvalue: pair.value,
            gamma,
            center,
            ipr,
        });
    }
    Ok(rows)
}

/// Empirical integrated density of states: phase-averaged fraction of
/// eigenvalues below each grid energy.
pub fn ids_estimate(
    lambda: f64,
    f: &SamplingFunction,
    size_n: usize,
    energy_grid: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    if energy_grid.is_empty() || samples == 0 {
        return Err(Error::invalid("ids_estimate: need energies and samples >= 1"));
    }
    if energy_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("ids_estimate: energy grid must be sorted"));
    }
    let sites = (size_n + 1) as f64;
    let mut counts = vec![0.0f64; energy_grid.len()];
    for i in 0..samples {
        let x = ensemble_phase(seed, i as u64, size_n + GUARD_BITS)?;
        let op = FiniteOperator::build(&x, lambda, f, size_n)?;
        for (j, &e) in energy_grid.iter().enumerate() {
            counts[j] += sturm_count(&op, e) as f64 / sites;
        }
    }
    Ok(energy_grid
        .iter()
        .zip(&counts)
        .map(|(&e, &c)| (e, c / samples as f64))
        .collect())
}

/// Mean of t ↦ log|t − e| over [a, b] (the log singularity is integrable;
/// endpoints at e contribute zero in the limit).
fn mean_log_distance(a: f64, b: f64, e: f64) -> f64 {
    debug_assert!(b > a);
    let term = |t: f64| {
        let d = t - e;
        if d == 0.0 {
            0.0
        } else {
            d * d.abs().ln()
        }
    };
    (term(b) - term(a)) / (b - a) - 1.0
}

/// |∫ log|E_eval − E| dk̂(E) − L̂| with the Stieltjes integral taken
/// against the piecewise-uniform interpolation of the IDS table.
///
/// Rejected when the table cannot resolve the log singularity: the cell
/// containing E_eval may carry at most 10% of the spectral mass, and the
/// table must cover essentially the whole spectrum.
pub fn thouless_residual(ids: &[(f64, f64)], e_eval: f64, l_hat: f64) -> Result<f64> {
    if ids.len() < 2 {
        return Err(Error::invalid("thouless_residual: need at least 2 IDS rows"));
    }
    if ids.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
        return Err(Error::invalid(
            "thouless_residual: IDS table must have increasing energies and non-decreasing k",
        ));
    }
    let total_mass = ids[ids.len() - 1].1 - ids[0].1;
    if total_mass < 0.98 {
        return Err(Error::invalid(format!(
            "thouless_residual: IDS table covers only {total_mass:.3} of the spectral mass"
        )));
    }
    let mut integral = 0.0;
    for w in ids.windows(2) {
        let (a, ka) = w[0];
        let (b, kb) = w[1];
        let mass = kb - ka;
        if mass == 0.0 {
            continue;
        }
        if e_eval >= a && e_eval <= b && mass > 0.1 {
            return Err(Error::invalid(format!(
                "thouless_residual: cell [{a}, {b}] holds mass {mass:.3} around E_eval; \
                 grid too coarse to resolve the log singularity"
            )));
        }
        integral += mass * mean_log_distance(a, b, e_eval);
    }
    Ok((integral - l_hat).abs())
}
