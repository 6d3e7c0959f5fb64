//! Lyapunov-exponent estimation.
//!
//! The direct estimator Monte-Carlos (1/n)·log‖Aₙ(x,E)‖ over uniform
//! phases. The accelerated estimator rebuilds the limit from short polar
//! blocks via the avalanche-principle combination 2·L̂ᴮ_{2K} − L̂ᴮ_K, which
//! converges exponentially in K instead of like 1/n. Estimates are
//! deterministic functions of (seed, config): phase i always comes from
//! ChaCha stream i of the given seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cocycle::{b_product, cocycle_product, NormalizedProduct, SL2Matrix};
use crate::error::{Error, Result};
use crate::phase::{DyadicPhase, GUARD_BITS};
use crate::potential::SamplingFunction;
use crate::stats::mean_stderr;

/// Which cocycle an estimate was computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CocycleKind {
    Transfer,
    Polar,
}

impl CocycleKind {
    pub fn label(&self) -> &'static str {
        match self {
            CocycleKind::Transfer => "A",
            CocycleKind::Polar => "B",
        }
    }
}

/// A Monte-Carlo Lyapunov estimate at one energy.
#[derive(Debug, Clone)]
pub struct LyapunovEstimate {
    pub energy: f64,
    pub lambda: f64,
    pub n: usize,
    pub samples: usize,
    pub mean: f64,
    pub stderr: f64,
    pub kind: CocycleKind,
}

pub(crate) fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws phase number `index` of the ensemble `(seed, precision)`.
pub fn ensemble_phase(seed: u64, index: u64, precision: usize) -> Result<DyadicPhase> {
    DyadicPhase::sample_uniform(&mut stream_rng(seed, index), precision)
}

/// Direct Monte-Carlo estimate of (1/n)·E_x[log‖Aₙ(x,E)‖].
pub fn finite_lyapunov(
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<LyapunovEstimate> {
    if n == 0 || samples == 0 {
        return Err(Error::invalid("finite_lyapunov: need n >= 1 and samples >= 1"));
    }
    let precision = n + GUARD_BITS;
    let mut values = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = ensemble_phase(seed, i as u64, precision)?;
        let p = cocycle_product(&x, energy, lambda, f, n)?;
        values.push(p.log_op_norm() / n as f64);
    }
    let (mean, stderr) = mean_stderr(&values);
    Ok(LyapunovEstimate {
        energy,
        lambda,
        n,
        samples,
        mean,
        stderr,
        kind: CocycleKind::Transfer,
    })
}

/// Polar-block estimate 2·L̂ᴮ_{2K}(E) − L̂ᴮ_K(E) with per-sample error
/// propagation (both block lengths share each sampled phase).
///
/// Below `lambda_min` the polar form is not trusted and the transfer
/// cocycle is substituted, with a logged warning.
#[allow(clippy::too_many_arguments)]
pub fn ap_lyapunov(
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    block: usize,
    samples: usize,
    seed: u64,
    lambda_min: f64,
) -> Result<LyapunovEstimate> {
    if block < 2 {
        return Err(Error::invalid("ap_lyapunov: need block length K >= 2"));
    }
    if samples == 0 {
        return Err(Error::invalid("ap_lyapunov: need samples >= 1"));
    }
    let use_polar = lambda >= lambda_min && lambda != 0.0;
    if !use_polar {
        log::warn!(
            "ap_lyapunov: lambda = {lambda} below lambda_min = {lambda_min}; falling back to the transfer cocycle"
        );
    }
    let precision = 2 * block + GUARD_BITS;
    let mut combos = Vec::with_capacity(samples);
    for i in 0..samples {
        let x = ensemble_phase(seed, i as u64, precision)?;
        let (log_k, log_2k) = if use_polar {
            let pk = b_product(&x, energy, lambda, f, block)?;
            let p2k = b_product(&x, energy, lambda, f, 2 * block)?;
            (pk.log_op_norm(), p2k.log_op_norm())
        } else {
            let pk = cocycle_product(&x, energy, lambda, f, block)?;
            let p2k = cocycle_product(&x, energy, lambda, f, 2 * block)?;
            (pk.log_op_norm(), p2k.log_op_norm())
        };
        combos.push(2.0 * log_2k / (2.0 * block as f64) - log_k / block as f64);
    }
    let (mean, stderr) = mean_stderr(&combos);
    Ok(LyapunovEstimate {
        energy,
        lambda,
        n: block,
        samples,
        mean,
        stderr,
        kind: if use_polar {
            CocycleKind::Polar
        } else {
            CocycleKind::Transfer
        },
    })
}

/// Avalanche-principle residual for a block sequence M₁, …, Mₙ:
///
///   | log‖Mₙ⋯M₁‖ + Σ_{j=2}^{n−1} log‖Mⱼ‖ − Σ_{j=1}^{n−1} log‖Mⱼ₊₁Mⱼ‖ |
///
/// Preconditions (checked, with the offending block reported): every block
/// norm at least `mu` with `mu ≥ n`, and every adjacent norm defect below
/// ½·log mu. The caller compares the residual against C·n/mu.
pub fn avalanche_residual(blocks: &[SL2Matrix], mu: f64) -> Result<f64> {
    let n = blocks.len();
    if n < 2 {
        return Err(Error::invalid("avalanche_residual: need at least 2 blocks"));
    }
    if mu < n as f64 {
        return Err(Error::AvalanchePrecondition(format!(
            "norm floor mu = {mu} is below the block count n = {n}"
        )));
    }
    let log_mu = mu.ln();
    let log_norms: Vec<f64> = blocks.iter().map(|m| m.op_norm().ln()).collect();
    for (j, &ln) in log_norms.iter().enumerate() {
        if ln < log_mu - 1e-12 {
            return Err(Error::AvalanchePrecondition(format!(
                "block {} has log-norm {ln:.6} below log mu = {log_mu:.6}",
                j + 1
            )));
        }
    }
    let mut pair_sum = 0.0;
    for j in 0..n - 1 {
        let pair = blocks[j + 1].mul(&blocks[j]).op_norm().ln();
        let defect = (log_norms[j + 1] + log_norms[j] - pair).abs();
        if defect >= 0.5 * log_mu {
            return Err(Error::AvalanchePrecondition(format!(
                "adjacent defect {defect:.6} at blocks {}..{} reaches half log mu = {:.6}",
                j + 1,
                j + 2,
                0.5 * log_mu
            )));
        }
        pair_sum += pair;
    }
    let mut chain = NormalizedProduct::identity();
    for m in blocks {
        chain.push(m);
    }
    let middle_sum: f64 = log_norms[1..n - 1].iter().sum();
    Ok((chain.log_op_norm() + middle_sum - pair_sum).abs())
}

/// One row of a Hölder-continuity scan: an adjacent energy pair and the
/// ratio |ΔL| / |ΔE|^alpha.
#[derive(Debug, Clone)]
pub struct HolderRow {
    pub e_lo: f64,
    pub e_hi: f64,
    pub delta_l: f64,
    pub delta_e: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct HolderScan {
    pub alpha: f64,
    pub rows: Vec<HolderRow>,
    pub max_ratio: f64,
}

/// Estimator settings shared by scan-style drivers.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorConfig {
    pub n: usize,
    pub samples: usize,
    pub seed: u64,
}

/// Empirical Hölder modulus of E ↦ L(E) over adjacent pairs of a sorted
/// energy grid. The theoretical exponent c/(log λ)³ is far below what
/// finite sampling resolves, so the scan reports the observed modulus at a
/// configured test exponent `alpha` instead of asserting a bound.
pub fn holder_scan(
    energy_grid: &[f64],
    lambda: f64,
    f: &SamplingFunction,
    alpha: f64,
    cfg: &EstimatorConfig,
) -> Result<HolderScan> {
    if energy_grid.len() < 2 {
        return Err(Error::invalid("holder_scan: need at least 2 grid energies"));
    }
    if !(0.0..=1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::invalid("holder_scan: alpha must lie in (0, 1]"));
    }
    if energy_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("holder_scan: energy grid must be sorted"));
    }
    let estimates: Vec<f64> = energy_grid
        .iter()
        .map(|&e| finite_lyapunov(e, lambda, f, cfg.n, cfg.samples, cfg.seed).map(|r| r.mean))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut max_ratio = 0.0f64;
    for i in 0..energy_grid.len() - 1 {
        let delta_e = energy_grid[i + 1] - energy_grid[i];
        let delta_l = (estimates[i + 1] - estimates[i]).abs();
        if delta_e == 0.0 || delta_l == 0.0 {
            continue;
        }
        let ratio = delta_l / delta_e.powf(alpha);
        max_ratio = max_ratio.max(ratio);
        rows.push(HolderRow {
            e_lo: energy_grid[i],
            e_hi: energy_grid[i + 1],
            delta_l,
            delta_e,
            ratio,
        });
    }
    Ok(HolderScan {
        alpha,
        rows,
        max_ratio,
    })
}

/// Closed-form Lyapunov exponent of the zero-potential cocycle at |E| > 2:
/// the log of the spectral radius of the constant transfer matrix.
pub fn free_lyapunov(energy: f64) -> f64 {
    let e = energy.abs();
    if e <= 2.0 {
        0.0
    } else {
        ((e + (e * e - 4.0).sqrt()) / 2.0).ln()
    }
}

/// Hyperbolic polar blocks M_j = B_K(2^{(j-1)K} x, E) cut from one orbit.
pub fn polar_blocks(
    x: &DyadicPhase,
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    block: usize,
    count: usize,
) -> Result<Vec<SL2Matrix>> {
    let mut out = Vec::with_capacity(count);
    for j in 0..count {
        let start = x.double(j * block)?;
        let p = b_product(&start, energy, lambda, f, block)?;
        // Blocks are consumed as plain matrices; keep them inside f64 range.
        let m = p.unit().scale(p.log_scale().exp());
        if !m.max_abs_entry().is_finite() {
            return Err(Error::invalid(format!(
                "polar_blocks: block {j} overflows f64 at K = {block}, lambda = {lambda}"
            )));
        }
        out.push(m);
    }
    Ok(out)
}
