//! Built-in oracle and invariant suite behind the `selftest` subcommand.
//!
//! Each check is a fast, deterministic replica of the core correctness
//! arguments: exact-arithmetic phase shifts, dense-product and
//! dense-inverse oracles, algebraic identities of the polar expansion, and
//! the closed-form free-chain results. One line per check, exit status 0
//! only when everything passes.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cocycle::{angle_orbit, b_product, cocycle_product, log_norm_expansion, transfer_step, SL2Matrix};
use crate::ldt::{birkhoff_ldt, Observable};
use crate::lyapunov::{avalanche_residual, finite_lyapunov, free_lyapunov};
use crate::phase::DyadicPhase;
use crate::potential::SamplingFunction;
use crate::spectrum::{
    eigenvalues, greens_column, logdet_sequence, verify_det_identity, FiniteOperator,
};

struct Harness {
    failures: usize,
}

impl Harness {
    fn check(&mut self, name: &str, result: std::result::Result<(), String>) {
        match result {
            Ok(()) => println!("[ pass ] {name}"),
            Err(detail) => {
                println!("[ FAIL ] {name}: {detail}");
                self.failures += 1;
            }
        }
    }
}

fn ensure(cond: bool, detail: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(detail())
    }
}

/// Runs every check; returns true when all pass.
pub fn run_selftest() -> bool {
    let mut h = Harness { failures: 0 };
    let f = SamplingFunction::identity();

    h.check("phase shift matches exact modular arithmetic", {
        let x = DyadicPhase::from_rational(123, 1023, 256).unwrap();
        let mut worst = 0.0f64;
        for n in [1usize, 17, 63, 150] {
            let got = x.double(n).unwrap().to_real(52).unwrap();
            let mut num = 123u128;
            for _ in 0..n {
                num = (num * 2) % 1023;
            }
            worst = worst.max((got - num as f64 / 1023.0).abs());
        }
        ensure(worst <= 2f64.powi(-52) + 1e-15, || format!("worst error {worst:.2e}"))
    });

    h.check("potential profile is monotone with unit range", {
        let pwl =
            SamplingFunction::piecewise_linear(vec![(0.0, 0.0), (0.5, 0.3), (1.0, 1.0)]).unwrap();
        let mut ok = true;
        let mut prev = -1.0;
        for i in 0..500 {
            let v = pwl.eval(i as f64 / 500.0).unwrap();
            ok &= v > prev && (0.0..=1.0).contains(&v);
            prev = v;
        }
        ensure(ok, || "monotonicity violated".into())
    });

    h.check("cocycle product matches dense oracle (n <= 30)", {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let x = DyadicPhase::sample_uniform(&mut rng, 128).unwrap();
            let lambda = rng.random_range(1.0..50.0);
            let energy = rng.random_range(-2.0 * lambda..2.0 * lambda);
            let n = rng.random_range(5..=30);
            let p = cocycle_product(&x, energy, lambda, &f, n).unwrap();
            let mut dense = SL2Matrix::IDENTITY;
            let mut y = x.clone();
            for _ in 0..n {
                y = y.double(1).unwrap();
                dense = transfer_step(y.to_real(53).unwrap(), energy, lambda, &f)
                    .unwrap()
                    .mul(&dense);
            }
            let rel = (p.log_op_norm() - dense.op_norm().ln()).abs()
                / dense.op_norm().ln().abs().max(1.0);
            worst = worst.max(rel);
        }
        ensure(worst < 1e-8, || format!("worst rel err {worst:.2e}"))
    });

    h.check("angle recursion reproduces the polar product", {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let x = DyadicPhase::sample_uniform(&mut rng, 256).unwrap();
            let lambda = rng.random_range(20.0..150.0);
            let energy = rng.random_range(-2.0 * lambda..2.0 * lambda);
            let beta = rng.random_range(0.0..std::f64::consts::PI);
            let orbit = angle_orbit(&x, energy, lambda, beta, &f, 100).unwrap();
            let exp = log_norm_expansion(&orbit, lambda);
            let direct = b_product(&x, energy, lambda, &f, 100)
                .unwrap()
                .log_vec_norm((beta.cos(), beta.sin()))
                / 100.0;
            worst = worst.max((exp.total - direct).abs() / direct.abs().max(1.0));
        }
        ensure(worst < 1e-8, || format!("worst rel err {worst:.2e}"))
    });

    h.check("remainder forms R1 and R2 agree", {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let x = DyadicPhase::sample_uniform(&mut rng, 256).unwrap();
            let lambda = rng.random_range(10.0..300.0);
            let energy = rng.random_range(-2.0 * lambda..2.0 * lambda);
            let orbit = angle_orbit(&x, energy, lambda, 0.0, &f, 100).unwrap();
            let exp = log_norm_expansion(&orbit, lambda);
            if let Some(t2) = exp.total_via_r2() {
                worst = worst.max((exp.total_via_r1() - t2).abs());
            }
        }
        ensure(worst < 1e-9, || format!("worst gap {worst:.2e}"))
    });

    h.check("free-case growth matches the spectral radius", {
        let est = finite_lyapunov(3.0, 0.0, &f, 2000, 2, 1).unwrap();
        let exact = free_lyapunov(3.0);
        ensure((est.mean - exact).abs() < 0.02, || {
            format!("{} vs {exact}", est.mean)
        })
    });

    h.check("avalanche residual vanishes for diagonal blocks", {
        let mu = 100.0;
        let blocks: Vec<SL2Matrix> = (0..10)
            .map(|_| SL2Matrix::new(mu, 0.0, 0.0, 1.0 / mu))
            .collect();
        let r = avalanche_residual(&blocks, mu).unwrap();
        ensure(r < 1e-12, || format!("residual {r:.2e}"))
    });

    h.check("log-determinant recurrence matches dense determinants", {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let origin = DyadicPhase::from_rational(1, 3, 128).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let sites = rng.random_range(2..=12);
            let diag: Vec<f64> = (0..sites).map(|_| rng.random_range(0.0..20.0)).collect();
            let op = FiniteOperator::from_diagonal(diag.clone(), 20.0, origin.clone());
            let energy = rng.random_range(-2.0..22.0);
            let seq = logdet_sequence(&op, energy);
            let mut dm1 = 1.0f64;
            let mut dm2 = 0.0f64;
            for (k, &v) in diag.iter().enumerate() {
                let d = (v - energy) * dm1 - dm2;
                dm2 = dm1;
                dm1 = d;
                if d != 0.0 {
                    worst = worst
                        .max((seq[k].log_abs - d.abs().ln()).abs() / d.abs().ln().abs().max(1.0));
                }
            }
        }
        ensure(worst < 1e-9, || format!("worst rel err {worst:.2e}"))
    });

    let det_identity = (|| -> std::result::Result<(), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        let mut offset_ok = true;
        for _ in 0..20 {
            let x = DyadicPhase::sample_uniform(&mut rng, 128).unwrap();
            let lambda = rng.random_range(2.0..50.0);
            let energy = rng.random_range(-2.0 * lambda..2.0 * lambda);
            let n = rng.random_range(2..=20);
            let id =
                verify_det_identity(&x, lambda, &f, energy, n).map_err(|e| e.to_string())?;
            worst = worst.max(id.max_error);
            offset_ok &= id.offset.as_u8() == 1;
        }
        ensure(worst < 1e-8 && offset_ok, || {
            format!("worst {worst:.2e}, stable offset {offset_ok}")
        })
    })();
    h.check("transfer product equals its determinant representation", det_identity);

    h.check("Green's column solves (H - E) G = e", {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let origin = DyadicPhase::from_rational(1, 3, 128).unwrap();
        let mut worst = 0.0f64;
        for _ in 0..25 {
            let sites = rng.random_range(3..=12);
            let diag: Vec<f64> = (0..sites).map(|_| rng.random_range(0.0..10.0)).collect();
            let op = FiniteOperator::from_diagonal(diag, 10.0, origin.clone());
            let energy = -1.3;
            let n2 = rng.random_range(0..sites);
            let col = greens_column(&op, energy, n2).unwrap();
            let g: Vec<f64> = col.iter().map(|v| v.to_f64()).collect();
            for (i, v) in op.apply_shifted(energy, &g).iter().enumerate() {
                let target = if i == n2 { 1.0 } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
        ensure(worst < 1e-7, || format!("worst residual {worst:.2e}"))
    });

    h.check("free-chain eigenvalues follow the cosine law", {
        let origin = DyadicPhase::from_rational(1, 3, 128).unwrap();
        let m = 30;
        let op = FiniteOperator::from_diagonal(vec![0.0; m], 0.0, origin);
        let evs = eigenvalues(&op, 1e-11).unwrap();
        let mut worst = 0.0f64;
        for (k, &e) in evs.iter().enumerate() {
            let exact = 2.0 * ((m - k) as f64 * std::f64::consts::PI / (m as f64 + 1.0)).cos();
            worst = worst.max((e - exact).abs());
        }
        ensure(worst < 1e-9, || format!("worst error {worst:.2e}"))
    });

    h.check("Birkhoff averages of a constant never deviate", {
        let rep = birkhoff_ldt(&Observable::Constant(0.4), 128, 0.01, 200, 2).unwrap();
        ensure(rep.measure_hat == 0.0, || format!("measure {}", rep.measure_hat))
    });

    h.check("estimators are deterministic in the seed", {
        let a = finite_lyapunov(25.0, 100.0, &f, 300, 20, 9).unwrap();
        let b = finite_lyapunov(25.0, 100.0, &f, 300, 20, 9).unwrap();
        ensure(a.mean == b.mean && a.stderr == b.stderr, || {
            format!("{} vs {}", a.mean, b.mean)
        })
    });

    if h.failures == 0 {
        println!("selftest: all checks passed");
        true
    } else {
        println!("selftest: {} check(s) FAILED", h.failures);
        false
    }
}
