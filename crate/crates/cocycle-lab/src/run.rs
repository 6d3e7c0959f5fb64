//! Batch run drivers: one function per subcommand, CSV + JSON manifest
//! persistence, and the determinism contract.
//!
//! Result files are written atomically (temp file in the same directory,
//! then rename), so an interrupted run never leaves a partial CSV at the
//! final path. Identical (config, seed) produce byte-identical CSV for
//! any worker count: every task's output is a pure function of its index.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Command, EnergySpec, RunConfig};
use crate::error::{Error, Result};
use crate::ldt::{angle_concentration, decay_rate_fit, deviation_profile, DecayFit};
use crate::lyapunov::{ap_lyapunov, ensemble_phase, finite_lyapunov, holder_scan, EstimatorConfig};
use crate::phase::GUARD_BITS;
use crate::potential::SamplingFunction;
use crate::selftest;
use crate::spectrum::{
    build_finite, eigenvalues, good_set_check, greens_decay_fit, greens_entry,
    localization_report, sturm_count, thouless_residual, verify_det_identity, ResonanceConfig,
};
use crate::sweep::{indexed_sweep, resolve_workers};

/// What a run produced.
#[derive(Debug)]
pub struct RunOutcome {
    pub csv_path: Option<PathBuf>,
    pub manifest_path: Option<PathBuf>,
    pub rows: usize,
    /// Self-test verdict; true for every other command.
    pub passed: bool,
}

fn write_atomic(path: &Path, content: &str) -> Result<()> {
    let tmp = path.with_extension(format!("tmp-{}", std::process::id()));
    std::fs::write(&tmp, content).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn config_hash(cfg: &RunConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(cfg.canonical().as_bytes());
    let digest = hasher.finalize();
    digest.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// The determinant-identity indexing offset, resolved on a fixed probe
/// orbit; recorded in every spectrum-family manifest.
fn resolve_det_offset(cfg: &RunConfig, f: &SamplingFunction) -> Result<u8> {
    let x = ensemble_phase(cfg.seed, 1 << 40, 16 + GUARD_BITS)?;
    let lambda = if cfg.lambda > 0.0 { cfg.lambda } else { 5.0 };
    let id = verify_det_identity(&x, lambda, f, 0.37 * lambda, 8)?;
    Ok(id.offset.as_u8())
}

fn collect_rows(parts: Vec<Result<Vec<String>>>) -> Result<Vec<String>> {
    let mut rows = Vec::new();
    for part in parts {
        rows.extend(part?);
    }
    Ok(rows)
}

struct CommandOutput {
    header: &'static str,
    rows: Vec<String>,
    summary: Value,
}

/// Executes a validated run plan and persists its results.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    let started = Instant::now();
    let f = cfg.potential.build()?;
    let workers = resolve_workers(cfg.workers);

    if cfg.command == Command::Selftest {
        let passed = selftest::run_selftest();
        return Ok(RunOutcome {
            csv_path: None,
            manifest_path: None,
            rows: 0,
            passed,
        });
    }

    let output = match cfg.command {
        Command::Lyapunov => run_lyapunov(cfg, &f, workers)?,
        Command::Ap => run_ap(cfg, &f, workers)?,
        Command::Ldt => run_ldt(cfg, &f, workers)?,
        Command::Angles => run_angles(cfg, &f)?,
        Command::Spectrum => run_spectrum(cfg, &f, workers)?,
        Command::Localize => run_localize(cfg, &f, workers)?,
        Command::Greens => run_greens(cfg, &f)?,
        Command::Holder => run_holder(cfg, &f)?,
        Command::Ids => run_ids(cfg, &f, workers)?,
        Command::Resonance => run_resonance(cfg, &f)?,
        Command::Goodset => run_goodset(cfg, &f, workers)?,
        Command::Selftest => unreachable!(),
    };

    let out_dir = PathBuf::from(&cfg.out_dir);
    std::fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
    let csv_path = out_dir.join(format!("{}.csv", cfg.command.name()));
    let mut csv = String::with_capacity(output.rows.len() * 40 + 64);
    csv.push_str(output.header);
    csv.push('\n');
    for row in &output.rows {
        csv.push_str(row);
        csv.push('\n');
    }
    write_atomic(&csv_path, &csv)?;

    let det_offset = match cfg.command {
        Command::Spectrum
        | Command::Localize
        | Command::Greens
        | Command::Ids
        | Command::Resonance
        | Command::Goodset => Some(resolve_det_offset(cfg, &f)?),
        _ => None,
    };
    let manifest_path = out_dir.join(format!("{}.manifest.json", cfg.command.name()));
    let manifest = json!({
        "command": cfg.command.name(),
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "config": cfg.canonical(),
        "version": env!("CARGO_PKG_VERSION"),
        "det_identity_offset": det_offset,
        "workers": workers,
        "wall_seconds": started.elapsed().as_secs_f64(),
        "rows": output.rows.len(),
        "csv": csv_path.file_name().and_then(|s| s.to_str()),
        "summary": output.summary,
    });
    let pretty =
        serde_json::to_string_pretty(&manifest).expect("manifest serialization is infallible");
    write_atomic(&manifest_path, &pretty)?;

    Ok(RunOutcome {
        csv_path: Some(csv_path),
        manifest_path: Some(manifest_path),
        rows: output.rows.len(),
        passed: true,
    })
}

fn run_lyapunov(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let energies = cfg.energy.values();
    let parts = indexed_sweep(energies.len(), workers, |i| {
        let est = finite_lyapunov(energies[i], cfg.lambda, f, cfg.n, cfg.samples, cfg.seed)?;
        Ok(vec![format!(
            "{},{},{},{},{},{},{}",
            est.energy, est.lambda, est.n, est.samples, est.mean, est.stderr,
            est.kind.label()
        )])
    });
    Ok(CommandOutput {
        header: "E,lambda,n,samples,mean,stderr,kind",
        rows: collect_rows(parts)?,
        summary: json!({"energies": energies.len()}),
    })
}

fn run_ap(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let energies = cfg.energy.values();
    let parts = indexed_sweep(energies.len(), workers, |i| {
        let est = ap_lyapunov(
            energies[i],
            cfg.lambda,
            f,
            cfg.block_k,
            cfg.samples,
            cfg.seed,
            cfg.lambda_min,
        )?;
        Ok(vec![format!(
            "{},{},{},{},{},{},{}",
            est.energy, est.lambda, est.n, est.samples, est.mean, est.stderr,
            est.kind.label()
        )])
    });
    Ok(CommandOutput {
        header: "E,lambda,K,samples,mean,stderr,kind",
        rows: collect_rows(parts)?,
        summary: json!({"energies": energies.len(), "block": cfg.block_k}),
    })
}

fn run_ldt(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let energy = match cfg.energy {
        EnergySpec::Single(e) => e,
        EnergySpec::Grid { .. } => {
            return Err(Error::config("command `ldt` expects a single energy"))
        }
    };
    let thresholds = cfg.thresholds.clone();
    let parts = indexed_sweep(thresholds.len(), workers, |i| {
        let profile = deviation_profile(
            energy,
            cfg.lambda,
            f,
            &cfg.n_list,
            thresholds[i],
            cfg.samples,
            cfg.seed,
        )?;
        let rows = profile
            .iter()
            .map(|r| {
                format!(
                    "{},{},{},{},{},{}",
                    r.n, r.threshold, r.measure_hat, r.wilson_lo, r.wilson_hi, r.samples
                )
            })
            .collect::<Vec<_>>();
        let fit = match decay_rate_fit(&profile) {
            DecayFit::Rate { rate, r_squared } => json!({
                "threshold": thresholds[i], "rate": rate, "r_squared": r_squared
            }),
            DecayFit::BelowResolution => json!({
                "threshold": thresholds[i], "rate": "below resolution"
            }),
        };
        Ok((rows, fit))
    });
    let mut rows = Vec::new();
    let mut fits = Vec::new();
    for part in parts {
        let (r, fit) = part?;
        rows.extend(r);
        fits.push(fit);
    }
    Ok(CommandOutput {
        header: "n,threshold,measure,lo,hi,samples",
        rows,
        summary: json!({"decay_fits": fits}),
    })
}

fn run_angles(cfg: &RunConfig, f: &SamplingFunction) -> Result<CommandOutput> {
    let energy = match cfg.energy {
        EnergySpec::Single(e) => e,
        EnergySpec::Grid { .. } => {
            return Err(Error::config("command `angles` expects a single energy"))
        }
    };
    let report = angle_concentration(
        energy, cfg.lambda, f, cfg.n, &cfg.deltas, cfg.beta, cfg.samples, cfg.seed,
    )?;
    let rows = report
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.delta, r.measure_hat, r.wilson_lo, r.wilson_hi, report.samples
            )
        })
        .collect();
    Ok(CommandOutput {
        header: "delta,measure,lo,hi,samples",
        rows,
        summary: json!({"fitted_cf": report.fitted_cf, "n": report.n}),
    })
}

fn run_spectrum(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let parts = indexed_sweep(cfg.samples, workers, |i| {
        let x = ensemble_phase(cfg.seed, i as u64, cfg.big_n + GUARD_BITS)?;
        let op = build_finite(&x, cfg.lambda, f, cfg.big_n)?;
        let evs = eigenvalues(&op, cfg.tol)?;
        Ok(evs
            .iter()
            .enumerate()
            .map(|(k, e)| format!("{i},{k},{e}"))
            .collect())
    });
    Ok(CommandOutput {
        header: "x_id,index,eigenvalue",
        rows: collect_rows(parts)?,
        summary: json!({"phases": cfg.samples, "sites": cfg.big_n + 1}),
    })
}

fn run_localize(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let parts = indexed_sweep(cfg.samples, workers, |i| {
        let x = ensemble_phase(cfg.seed, i as u64, cfg.big_n + GUARD_BITS)?;
        let rows = localization_report(&x, cfg.lambda, f, cfg.big_n, cfg.seed ^ (i as u64))?;
        Ok(rows
            .iter()
            .map(|r| format!("{},{},{},{}", r.eigenvalue, r.gamma, r.center, r.ipr))
            .collect())
    });
    Ok(CommandOutput {
        header: "eigenvalue,gamma,center,ipr",
        rows: collect_rows(parts)?,
        summary: json!({"phases": cfg.samples, "sites": cfg.big_n + 1}),
    })
}

fn run_greens(cfg: &RunConfig, f: &SamplingFunction) -> Result<CommandOutput> {
    let energy = match cfg.energy {
        EnergySpec::Single(e) => e,
        EnergySpec::Grid { .. } => {
            return Err(Error::config("command `greens` expects a single energy"))
        }
    };
    let x = ensemble_phase(cfg.seed, 0, cfg.big_n + GUARD_BITS)?;
    let op = build_finite(&x, cfg.lambda, f, cfg.big_n)?;
    // Eigenvalue collisions are dodged by a tiny deterministic jitter.
    let mut e_used = energy;
    let mut rows = Vec::new();
    'attempt: for attempt in 0..4 {
        rows.clear();
        for n1 in cfg.greens_window.0..=cfg.greens_window.1 {
            for n2 in n1..=cfg.greens_window.1 {
                match greens_entry(&op, e_used, n1, n2) {
                    Ok(g) => rows.push(format!("{n1},{n2},{},{}", g.sign, g.log_abs)),
                    Err(Error::SingularEnergy(_)) if attempt < 3 => {
                        e_used += 1e-9 * cfg.lambda.max(1.0);
                        log::warn!("greens: E hit an eigenvalue; jittered to {e_used}");
                        continue 'attempt;
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        break;
    }
    let fit = greens_decay_fit(&op, e_used, cfg.greens_window)?;
    Ok(CommandOutput {
        header: "n1,n2,sign,log_abs",
        rows,
        summary: json!({
            "energy": e_used,
            "slope": fit.slope,
            "intercept": fit.intercept,
            "r_squared": fit.r_squared,
            "pairs": fit.pairs,
        }),
    })
}

fn run_holder(cfg: &RunConfig, f: &SamplingFunction) -> Result<CommandOutput> {
    let grid = cfg.energy.values();
    let est = EstimatorConfig {
        n: cfg.n,
        samples: cfg.samples,
        seed: cfg.seed,
    };
    let scan = holder_scan(&grid, cfg.lambda, f, cfg.alpha, &est)?;
    let rows = scan
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{}",
                r.e_lo, r.e_hi, r.delta_l, r.delta_e, r.ratio
            )
        })
        .collect();
    Ok(CommandOutput {
        header: "E_lo,E_hi,dL,dE,ratio",
        rows,
        summary: json!({"alpha": scan.alpha, "max_ratio": scan.max_ratio}),
    })
}

fn run_ids(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let grid = cfg.energy.values();
    let sites = (cfg.big_n + 1) as f64;
    // one task per phase; ordered reduction keeps float sums deterministic
    let parts: Vec<Result<Vec<f64>>> = indexed_sweep(cfg.samples, workers, |i| {
        let x = ensemble_phase(cfg.seed, i as u64, cfg.big_n + GUARD_BITS)?;
        let op = build_finite(&x, cfg.lambda, f, cfg.big_n)?;
        Ok(grid
            .iter()
            .map(|&e| sturm_count(&op, e) as f64 / sites)
            .collect())
    });
    let mut acc = vec![0.0f64; grid.len()];
    for part in parts {
        for (a, v) in acc.iter_mut().zip(part?) {
            *a += v;
        }
    }
    let table: Vec<(f64, f64)> = grid
        .iter()
        .zip(&acc)
        .map(|(&e, &c)| (e, c / cfg.samples as f64))
        .collect();
    let rows = table.iter().map(|(e, k)| format!("{e},{k}")).collect();
    let summary = match cfg.e_eval {
        Some(e_eval) => {
            let l_hat = finite_lyapunov(e_eval, cfg.lambda, f, cfg.n, cfg.samples, cfg.seed)?.mean;
            match thouless_residual(&table, e_eval, l_hat) {
                Ok(res) => json!({
                    "thouless": {"e_eval": e_eval, "l_hat": l_hat, "residual": res}
                }),
                Err(e) => json!({
                    "thouless": {"e_eval": e_eval, "l_hat": l_hat, "error": e.to_string()}
                }),
            }
        }
        None => json!({"phases": cfg.samples}),
    };
    Ok(CommandOutput {
        header: "E,k",
        rows,
        summary,
    })
}

fn run_resonance(cfg: &RunConfig, f: &SamplingFunction) -> Result<CommandOutput> {
    let scan_cfg = ResonanceConfig {
        scale_n: cfg.big_n.min(12),
        n1_list: cfg.n1_list.clone(),
        shift_list: cfg.shift_list.clone(),
        ca_slack: cfg.ca_slack,
        samples: cfg.samples,
        inner_samples: cfg.inner_samples,
        seed: cfg.seed,
        budget: cfg.budget,
    };
    let scan = crate::spectrum::double_resonance_scan(cfg.lambda, f, &scan_cfg)?;
    let rows = scan
        .hits
        .iter()
        .map(|h| {
            format!(
                "{},{},{},{},{},{}",
                h.phase_index, h.energy, h.n1, h.shift, h.cond_green, h.cond_growth
            )
        })
        .collect();
    Ok(CommandOutput {
        header: "x_id,E,N1,k,cond1,cond2",
        rows,
        summary: json!({
            "hit_fraction": scan.hit_fraction,
            "wilson_lo": scan.wilson_lo,
            "wilson_hi": scan.wilson_hi,
            "samples": scan.samples,
            "energies_checked": scan.energies_checked,
        }),
    })
}

fn run_goodset(cfg: &RunConfig, f: &SamplingFunction, workers: usize) -> Result<CommandOutput> {
    let energy = match cfg.energy {
        EnergySpec::Single(e) => e,
        EnergySpec::Grid { .. } => {
            return Err(Error::config("command `goodset` expects a single energy"))
        }
    };
    if cfg.n < 2 {
        return Err(Error::config("command `goodset` needs n >= 2"));
    }
    let reference = finite_lyapunov(energy, cfg.lambda, f, cfg.n, cfg.inner_samples.max(64), cfg.seed)?;
    let window = cfg.n.pow(4).min(cfg.window_cap);
    let k0_max = cfg.n.checked_pow(8).map_or(cfg.k0_cap, |v| v.min(cfg.k0_cap));
    let precision = k0_max + window + cfg.n + GUARD_BITS;
    let parts = indexed_sweep(cfg.samples, workers, |i| {
        let x = ensemble_phase(cfg.seed, i as u64, precision)?;
        let chk = good_set_check(
            &x,
            energy,
            cfg.lambda,
            f,
            cfg.n,
            cfg.k0_cap,
            cfg.k0_samples,
            cfg.window_cap,
            &reference,
        )?;
        Ok(vec![format!("{i},{},{}", chk.deviation, chk.window)])
    });
    let rows = collect_rows(parts)?;
    let deviations: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.split(',').nth(1).and_then(|v| v.parse().ok()))
        .collect();
    let max_dev = deviations.iter().cloned().fold(0.0f64, f64::max);
    let within = deviations.iter().filter(|&&d| d <= 1.0).count();
    Ok(CommandOutput {
        header: "x_id,deviation,window",
        rows,
        summary: json!({
            "reference_mean": reference.mean,
            "max_deviation": max_dev,
            "fraction_within_1": within as f64 / cfg.samples as f64,
        }),
    })
}
