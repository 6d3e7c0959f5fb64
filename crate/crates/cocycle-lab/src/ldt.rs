//! Empirical large-deviation statistics.
//!
//! The growth rate (1/n)·log‖vₙ(x)‖ of the polar cocycle concentrates at
//! log λ up to an f-dependent constant; the estimators here measure how
//! often sampled phases escape a deviation threshold, how that measure
//! decays in n, how sharply the auxiliary angle concentrates near π/2, and
//! the moment and Birkhoff-average bounds behind those tail estimates.
//! All estimates are deterministic in (seed, config); a fixed seed reuses
//! the same phase ensemble across n values, so decay trends are compared
//! with common random numbers.

use crate::cocycle::{angle_orbit, b_product, log_max_vec_norm};
use crate::error::{Error, Result};
use crate::lyapunov::ensemble_phase;
use crate::phase::{DyadicPhase, F64_DIGITS, GUARD_BITS};
use crate::potential::SamplingFunction;
use crate::stats::{fit_line, fit_through_origin, log_add_exp, wilson_interval};

/// Empirical measure of one deviation event, with a 95% Wilson interval.
#[derive(Debug, Clone)]
pub struct DeviationReport {
    pub n: usize,
    pub threshold: f64,
    pub measure_hat: f64,
    pub samples: usize,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

fn deviation_report(n: usize, threshold: f64, hits: usize, samples: usize) -> DeviationReport {
    let (lo, hi) = wilson_interval(hits, samples);
    DeviationReport {
        n,
        threshold,
        measure_hat: hits as f64 / samples as f64,
        samples,
        wilson_lo: lo,
        wilson_hi: hi,
    }
}

/// Fraction of phases with |(1/n)·log‖vₙ(x)‖ − log λ| > threshold, where
/// vₙ maximizes the norm over the standard start angles.
pub fn deviation_measure(
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    n: usize,
    threshold: f64,
    samples: usize,
    seed: u64,
) -> Result<DeviationReport> {
    let mut reports = deviation_profile(energy, lambda, f, &[n], threshold, samples, seed)?;
    Ok(reports.pop().expect("single-n profile"))
}

/// Deviation measures at several orbit lengths over one common phase
/// ensemble (the same phase index maps to the same phase at every n).
#[allow(clippy::too_many_arguments)]
pub fn deviation_profile(
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    n_list: &[usize],
    threshold: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<DeviationReport>> {
    if lambda == 0.0 {
        return Err(Error::invalid("deviation_measure: polar form undefined at lambda = 0"));
    }
    if threshold <= 0.0 {
        return Err(Error::invalid("deviation_measure: threshold must be positive"));
    }
    if n_list.is_empty() || n_list.contains(&0) || samples == 0 {
        return Err(Error::invalid(
            "deviation_measure: need nonempty n list of positive lengths and samples >= 1",
        ));
    }
    let mut checkpoints: Vec<usize> = n_list.to_vec();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let n_max = *checkpoints.last().unwrap();
    let precision = n_max + GUARD_BITS;
    let log_lambda = lambda.ln();

    let mut hits = vec![0usize; checkpoints.len()];
    for i in 0..samples {
        let x = ensemble_phase(seed, i as u64, precision)?;
        // One pass per phase, evaluating at each checkpoint length.
        let mut prev = 0usize;
        let mut partial: Option<crate::cocycle::NormalizedProduct> = None;
        for (ci, &n) in checkpoints.iter().enumerate() {
            let product = match partial.take() {
                None => b_product(&x, energy, lambda, f, n)?,
                Some(p) => extend_b_product(p, &x, prev, energy, lambda, f, n - prev)?,
            };
            let rate = log_max_vec_norm(&product) / n as f64;
            if (rate - log_lambda).abs() > threshold {
                hits[ci] += 1;
            }
            prev = n;
            partial = Some(product);
        }
    }
    Ok(checkpoints
        .iter()
        .zip(&hits)
        .map(|(&n, &h)| deviation_report(n, threshold, h, samples))
        .collect())
}

/// Continues a polar product from step `done` by `extra` more factors.
#[allow(clippy::too_many_arguments)]
fn extend_b_product(
    mut product: crate::cocycle::NormalizedProduct,
    x: &DyadicPhase,
    done: usize,
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    extra: usize,
) -> Result<crate::cocycle::NormalizedProduct> {
    let t = energy / lambda;
    let mut y = x.double(done)?;
    let mut u_cur = t - f.eval(y.to_real(F64_DIGITS)?)?;
    for _ in 0..extra {
        y = y.double(1)?;
        let u_next = t - f.eval(y.to_real(F64_DIGITS)?)?;
        let g_cur = u_cur * u_cur + 1.0;
        let g_next = u_next * u_next + 1.0;
        let inv = g_cur.sqrt().recip();
        let stretch = lambda * g_next.sqrt();
        product.push(&crate::cocycle::SL2Matrix::new(
            stretch * u_cur * inv,
            -stretch * inv,
            inv / stretch,
            u_cur * inv / stretch,
        ));
        u_cur = u_next;
    }
    Ok(product)
}

/// Outcome of fitting an exponential decay to deviation measures.
#[derive(Debug, Clone, PartialEq)]
pub enum DecayFit {
    /// measure ≈ C·e^{−rate·n}; rate is the positive per-step exponent.
    Rate { rate: f64, r_squared: f64 },
    /// Fewer than three nonzero measures: nothing to fit at this sample
    /// size.
    BelowResolution,
}

/// Least-squares fit of log(measure) against n over reports with nonzero
/// measure.
pub fn decay_rate_fit(reports: &[DeviationReport]) -> DecayFit {
    let points: Vec<(f64, f64)> = reports
        .iter()
        .filter(|r| r.measure_hat > 0.0)
        .map(|r| (r.n as f64, r.measure_hat.ln()))
        .collect();
    if points.len() < 3 {
        return DecayFit::BelowResolution;
    }
    match fit_line(&points) {
        Some(fit) => DecayFit::Rate {
            rate: -fit.slope,
            r_squared: fit.r_squared,
        },
        None => DecayFit::BelowResolution,
    }
}

/// Distance of a lifted angle to the nearest point of π·ℤ after centering
/// at π/2 (directions, not vectors).
fn rp1_distance_to_half_pi(theta: f64) -> f64 {
    let u = (theta - std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI);
    u.min(std::f64::consts::PI - u)
}

/// One row of an angle-concentration table.
#[derive(Debug, Clone)]
pub struct ConcentrationRow {
    pub delta: f64,
    pub measure_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

#[derive(Debug, Clone)]
pub struct AngleConcentration {
    pub n: usize,
    pub samples: usize,
    pub rows: Vec<ConcentrationRow>,
    /// Slope of measure against δ through the origin: the empirical
    /// concentration constant.
    pub fitted_cf: Option<f64>,
}

/// Measures {x : ‖θₙ(x) − π/2‖_{ℝP¹} < δ} for each δ, over one ensemble
/// of phases started at angle `beta`.
#[allow(clippy::too_many_arguments)]
pub fn angle_concentration(
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    n: usize,
    deltas: &[f64],
    beta: f64,
    samples: usize,
    seed: u64,
) -> Result<AngleConcentration> {
    if deltas.is_empty()
        || deltas
            .iter()
            .any(|&d| d <= 0.0 || d > std::f64::consts::FRAC_PI_2)
    {
        return Err(Error::invalid(
            "angle_concentration: every delta must lie in (0, pi/2]",
        ));
    }
    if samples == 0 {
        return Err(Error::invalid("angle_concentration: need samples >= 1"));
    }
    let precision = n + 1 + GUARD_BITS;
    let mut hits = vec![0usize; deltas.len()];
    for i in 0..samples {
        let x = ensemble_phase(seed, i as u64, precision)?;
        // theta_n is the (n+1)-th entry of the angle sequence.
        let orbit = angle_orbit(&x, energy, lambda, beta, f, n + 1)?;
        let d = rp1_distance_to_half_pi(orbit.theta[n]);
        for (j, &delta) in deltas.iter().enumerate() {
            if d < delta {
                hits[j] += 1;
            }
        }
    }
    let rows: Vec<ConcentrationRow> = deltas
        .iter()
        .zip(&hits)
        .map(|(&delta, &h)| {
            let (lo, hi) = wilson_interval(h, samples);
            ConcentrationRow {
                delta,
                measure_hat: h as f64 / samples as f64,
                wilson_lo: lo,
                wilson_hi: hi,
            }
        })
        .collect();
    let fitted_cf = fit_through_origin(
        &rows
            .iter()
            .map(|r| (r.delta, r.measure_hat))
            .collect::<Vec<_>>(),
    );
    Ok(AngleConcentration {
        n,
        samples,
        rows,
        fitted_cf,
    })
}

/// Monte-Carlo moment estimates of ‖vₙ‖^{±a} against the analytic-shape
/// bounds with an empirical concentration constant plugged in.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub exponent: f64,
    pub n: usize,
    pub samples: usize,
    /// log E[‖vₙ‖^{−a}] and its bound −a·n·log λ + 10·a·n·log(3·C_f).
    pub log_neg_moment: f64,
    pub log_neg_bound: f64,
    pub neg_pass: bool,
    /// log E[‖vₙ‖^{+a}] and its bound a·n·log λ + a·n·(½log 10 + ¼C_f/λ).
    pub log_pos_moment: f64,
    pub log_pos_bound: f64,
    pub pos_pass: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn moment_bounds_check(
    energy: f64,
    lambda: f64,
    f: &SamplingFunction,
    n: usize,
    exponent: f64,
    samples: usize,
    seed: u64,
    empirical_cf: f64,
    min_n: usize,
) -> Result<MomentCheck> {
    if lambda == 0.0 {
        return Err(Error::invalid("moment_bounds_check: rejected at lambda = 0"));
    }
    if !(0.0..0.5).contains(&exponent) {
        return Err(Error::invalid(
            "moment_bounds_check: exponent a must lie in [0, 1/2)",
        ));
    }
    if n <= min_n {
        return Err(Error::invalid(format!(
            "moment_bounds_check: n = {n} must exceed the configured floor {min_n}"
        )));
    }
    if samples == 0 {
        return Err(Error::invalid("moment_bounds_check: need samples >= 1"));
    }
    let (log_neg_moment, log_pos_moment) = if exponent == 0.0 {
        (0.0, 0.0) // ||v||^0 = 1 for every phase
    } else {
        let precision = n + GUARD_BITS;
        let mut log_neg_sum = f64::NEG_INFINITY;
        let mut log_pos_sum = f64::NEG_INFINITY;
        for i in 0..samples {
            let x = ensemble_phase(seed, i as u64, precision)?;
            let log_norm = log_max_vec_norm(&b_product(&x, energy, lambda, f, n)?);
            log_neg_sum = log_add_exp(log_neg_sum, -exponent * log_norm);
            log_pos_sum = log_add_exp(log_pos_sum, exponent * log_norm);
        }
        let log_samples = (samples as f64).ln();
        (log_neg_sum - log_samples, log_pos_sum - log_samples)
    };
    let an = exponent * n as f64;
    let log_neg_bound = -an * lambda.ln() + 10.0 * an * (3.0 * empirical_cf).ln();
    let log_pos_bound = an * lambda.ln() + an * (0.5 * 10f64.ln() + 0.25 * empirical_cf / lambda);
    Ok(MomentCheck {
        exponent,
        n,
        samples,
        log_neg_moment,
        log_neg_bound,
        neg_pass: log_neg_moment < log_neg_bound,
        log_pos_moment,
        log_pos_bound,
        pos_pass: log_pos_moment < log_pos_bound,
    })
}

/// Bounded observables with exactly known mean, continuous on dyadic
/// intervals, for Birkhoff-average deviation tests.
#[derive(Debug, Clone)]
pub enum Observable {
    Constant(f64),
    /// +1 on [0, ½), −1 on [½, 1): reads one bit of the phase.
    FairSign,
    /// 2x − 1.
    CenteredLinear,
    /// 2·f(x) − 1 for a sampling profile (mean from the exact integral).
    CenteredProfile(SamplingFunction, Vec<(f64, f64)>),
}

impl Observable {
    pub fn centered_profile(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        let f = SamplingFunction::piecewise_linear(breakpoints.clone())?;
        Ok(Observable::CenteredProfile(f, breakpoints))
    }

    fn validate(&self) -> Result<()> {
        if let Observable::Constant(c) = self {
            if c.abs() > 1.0 {
                return Err(Error::invalid(format!(
                    "birkhoff observable must satisfy |F| <= 1, got constant {c}"
                )));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        Ok(match self {
            Observable::Constant(c) => *c,
            Observable::FairSign => {
                if x < 0.5 {
                    1.0
                } else {
                    -1.0
                }
            }
            Observable::CenteredLinear => 2.0 * x - 1.0,
            Observable::CenteredProfile(f, _) => 2.0 * f.eval(x)? - 1.0,
        })
    }

    /// Exact mean over the torus.
    pub fn mean(&self) -> f64 {
        match self {
            Observable::Constant(c) => *c,
            Observable::FairSign => 0.0,
            Observable::CenteredLinear => 0.0,
            Observable::CenteredProfile(_, pts) => {
                let integral: f64 = pts
                    .windows(2)
                    .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
                    .sum();
                2.0 * integral - 1.0
            }
        }
    }
}

/// Fraction of phases whose Birkhoff average (1/r)·Σ_{k=1}^{r} F(2ᵏx)
/// strays from the exact mean by more than δ.
pub fn birkhoff_ldt(
    observable: &Observable,
    r: usize,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<DeviationReport> {
    observable.validate()?;
    if r == 0 || samples == 0 {
        return Err(Error::invalid("birkhoff_ldt: need r >= 1 and samples >= 1"));
    }
    if delta <= 0.0 {
        return Err(Error::invalid("birkhoff_ldt: delta must be positive"));
    }
    let precision = r + 1 + GUARD_BITS;
    let mean = observable.mean();
    let mut hits = 0usize;
    for i in 0..samples {
        let x = ensemble_phase(seed, i as u64, precision)?;
        let mut acc = 0.0;
        let mut y = x;
        for _ in 1..=r {
            y = y.double(1)?;
            acc += observable.eval(y.to_real(F64_DIGITS)?)?;
        }
        if (acc / r as f64 - mean).abs() > delta {
            hits += 1;
        }
    }
    Ok(deviation_report(r, delta, hits, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident() -> SamplingFunction {
        SamplingFunction::identity()
    }

    #[test]
    fn uniform_bound_threshold_is_never_exceeded() {
        // threshold 4 log lambda is impossible under the uniform bound.
        let rep = deviation_measure(50.0, 100.0, &ident(), 100, 4.0 * 100f64.ln(), 500, 3).unwrap();
        assert_eq!(rep.measure_hat, 0.0);
        assert!(rep.wilson_lo < 1e-12 && rep.wilson_hi < 0.01);
    }

    #[test]
    fn deviation_rejects_lambda_zero_and_bad_args() {
        assert!(deviation_measure(1.0, 0.0, &ident(), 10, 1.0, 10, 1).is_err());
        assert!(deviation_measure(1.0, 10.0, &ident(), 10, 0.0, 10, 1).is_err());
        assert!(deviation_measure(1.0, 10.0, &ident(), 0, 1.0, 10, 1).is_err());
    }

    #[test]
    fn deviation_nested_in_threshold() {
        let f = ident();
        let m1 = deviation_measure(50.0, 100.0, &f, 100, 0.4, 2000, 9).unwrap();
        let m2 = deviation_measure(50.0, 100.0, &f, 100, 0.8, 2000, 9).unwrap();
        let m3 = deviation_measure(50.0, 100.0, &f, 100, 1.2, 2000, 9).unwrap();
        assert!(m1.measure_hat >= m2.measure_hat && m2.measure_hat >= m3.measure_hat);
    }

    #[test]
    fn deviation_profile_matches_single_calls() {
        // The checkpointed pass must agree with independent full products.
        let f = ident();
        let profile = deviation_profile(40.0, 100.0, &f, &[50, 100, 200], 0.8, 300, 5).unwrap();
        for rep in &profile {
            let single = deviation_measure(40.0, 100.0, &f, rep.n, 0.8, 300, 5).unwrap();
            assert_eq!(rep.measure_hat, single.measure_hat, "n = {}", rep.n);
        }
    }

    #[test]
    fn decay_fit_recovers_synthetic_rate() {
        let reports: Vec<DeviationReport> = [100usize, 200, 300, 400]
            .iter()
            .map(|&n| DeviationReport {
                n,
                threshold: 1.0,
                measure_hat: (-0.01 * n as f64).exp(),
                samples: 1000,
                wilson_lo: 0.0,
                wilson_hi: 1.0,
            })
            .collect();
        match decay_rate_fit(&reports) {
            DecayFit::Rate { rate, r_squared } => {
                assert!((rate - 0.01).abs() < 1e-6);
                assert!(r_squared > 0.999);
            }
            DecayFit::BelowResolution => panic!("expected a rate"),
        }
    }

    #[test]
    fn decay_fit_flags_below_resolution() {
        let zero = |n: usize| DeviationReport {
            n,
            threshold: 1.0,
            measure_hat: 0.0,
            samples: 100,
            wilson_lo: 0.0,
            wilson_hi: 0.05,
        };
        assert_eq!(
            decay_rate_fit(&[zero(100), zero(200), zero(400)]),
            DecayFit::BelowResolution
        );
    }

    #[test]
    fn angle_concentration_full_cover_and_monotone() {
        let f = ident();
        let report = angle_concentration(
            50.0,
            100.0,
            &f,
            20,
            &[std::f64::consts::FRAC_PI_2, 0.2, 0.1, 0.05],
            0.0,
            2000,
            13,
        )
        .unwrap();
        // delta = pi/2 covers everything except the measure-zero grid.
        assert!((report.rows[0].measure_hat - 1.0).abs() < 1e-9);
        // nested sets: measures monotone in delta
        assert!(report.rows[1].measure_hat >= report.rows[2].measure_hat);
        assert!(report.rows[2].measure_hat >= report.rows[3].measure_hat);
        assert!(report.fitted_cf.unwrap() > 0.0);
    }

    #[test]
    fn angle_concentration_linearity() {
        let f = ident();
        let deltas = [0.2, 0.1, 0.05, 0.025];
        let report = angle_concentration(50.0, 100.0, &f, 50, &deltas, 0.0, 10_000, 2).unwrap();
        let ratios: Vec<f64> = report
            .rows
            .iter()
            .map(|r| r.measure_hat / r.delta)
            .collect();
        let max = ratios.iter().fold(0.0f64, |a, &b| a.max(b));
        let min = ratios.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        assert!(min > 0.0, "every ladder rung should be populated: {ratios:?}");
        assert!(max / min < 4.0, "ratios {ratios:?}");
    }

    #[test]
    fn angle_concentration_validates_deltas() {
        assert!(angle_concentration(1.0, 10.0, &ident(), 5, &[2.0], 0.0, 10, 1).is_err());
        assert!(angle_concentration(1.0, 10.0, &ident(), 5, &[], 0.0, 10, 1).is_err());
    }

    #[test]
    fn moment_zero_exponent_is_unity() {
        let chk = moment_bounds_check(30.0, 100.0, &ident(), 50, 0.0, 50, 1, 2.0, 10).unwrap();
        assert_eq!(chk.log_neg_moment, 0.0);
        assert_eq!(chk.log_pos_moment, 0.0);
    }

    #[test]
    fn moment_bounds_hold_at_large_coupling() {
        let chk =
            moment_bounds_check(50.0, 100.0, &ident(), 500, 0.04, 400, 8, 2.0, 20).unwrap();
        // Negative moment concentrates as e^{-a n (log lambda + O(1))}.
        let slack = 0.04 * 500.0 * (100f64.ln() - 5.0);
        assert!(chk.log_neg_moment < -slack, "{} vs {}", chk.log_neg_moment, -slack);
        assert!(chk.neg_pass && chk.pos_pass);
        assert!(moment_bounds_check(1.0, 0.0, &ident(), 50, 0.1, 10, 1, 2.0, 10).is_err());
        assert!(moment_bounds_check(1.0, 10.0, &ident(), 50, 0.6, 10, 1, 2.0, 10).is_err());
    }

    #[test]
    fn birkhoff_constant_never_deviates() {
        let rep = birkhoff_ldt(&Observable::Constant(0.3), 64, 0.05, 300, 1).unwrap();
        assert_eq!(rep.measure_hat, 0.0);
        assert!(birkhoff_ldt(&Observable::Constant(1.5), 64, 0.05, 10, 1).is_err());
    }

    #[test]
    fn birkhoff_fair_sign_decays_in_r() {
        let f = Observable::FairSign;
        let m64 = birkhoff_ldt(&f, 64, 0.25, 4000, 6).unwrap();
        let m256 = birkhoff_ldt(&f, 256, 0.25, 4000, 6).unwrap();
        assert!(m64.measure_hat > m256.measure_hat);
        assert!(m64.measure_hat > 0.0, "r=64 tail should be visible");
    }

    #[test]
    fn birkhoff_linear_observable_concentrates() {
        let rep = birkhoff_ldt(&Observable::CenteredLinear, 512, 0.3, 1000, 4).unwrap();
        assert!(rep.measure_hat < 0.05, "measure {}", rep.measure_hat);
    }

    #[test]
    fn centered_profile_mean_is_exact() {
        let obs = Observable::centered_profile(vec![(0.0, 0.0), (0.5, 0.3), (1.0, 1.0)]).unwrap();
        // integral of f = 0.075 + 0.325 = 0.4, mean = -0.2
        assert!((obs.mean() + 0.2).abs() < 1e-12);
    }
}
