//! Property tests for the structural invariants that hold for all inputs,
//! not just the worked examples.

use proptest::prelude::*;

use cocycle_lab::cocycle::angle_step;
use cocycle_lab::phase::DyadicPhase;
use cocycle_lab::potential::SamplingFunction;
use cocycle_lab::spectrum::LogDet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Shift correctness against exact modular arithmetic: for odd q,
    /// to_real(double(p/q, n)) is the truncation of (2^n p mod q)/q.
    #[test]
    fn phase_shift_matches_modular_arithmetic(
        q in (3u64..1_000_000).prop_map(|v| v | 1),
        p_frac in 0.0f64..1.0,
        n in 0usize..192,
    ) {
        let p = ((q as f64 * p_frac) as u64).min(q - 1);
        let x = DyadicPhase::from_rational(p, q, 256).unwrap();
        let got = x.double(n).unwrap().to_real(52).unwrap();
        let mut num = p as u128;
        for _ in 0..n {
            num = (num * 2) % q as u128;
        }
        let exact = num as f64 / q as f64;
        prop_assert!((got - exact).abs() <= 2f64.powi(-52) + 1e-15,
            "p/q = {p}/{q}, n = {n}: {got} vs {exact}");
    }

    /// Consumption is monotone and bounded by the guard.
    #[test]
    fn phase_guard_is_enforced(precision in 65usize..512, step in 1usize..600) {
        let x = DyadicPhase::from_rational(1, 3, precision).unwrap();
        match x.double(step) {
            Ok(y) => {
                prop_assert!(step + 64 <= precision);
                prop_assert_eq!(y.consumed(), step);
            }
            Err(_) => prop_assert!(step + 64 > precision),
        }
    }

    /// Piecewise-linear profiles are strictly monotone with range [0, 1].
    #[test]
    fn potential_monotone_in_range(
        cuts in proptest::collection::vec(0.01f64..0.99, 1..6),
        x in 0.0f64..1.0,
        y in 0.0f64..1.0,
    ) {
        let mut xs: Vec<f64> = cuts.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-3);
        let m = xs.len();
        let mut points = vec![(0.0, 0.0)];
        for (i, &cx) in xs.iter().enumerate() {
            // strictly increasing heights spread over (0, 1)
            points.push((cx, (i + 1) as f64 / (m + 1) as f64 * 0.9));
        }
        points.push((1.0, 1.0));
        let f = SamplingFunction::piecewise_linear(points).unwrap();
        let (lo, hi) = if x < y { (x, y) } else if y < x { (y, x) } else { return Ok(()); };
        let flo = f.eval(lo).unwrap();
        let fhi = f.eval(hi).unwrap();
        prop_assert!(flo < fhi, "f({lo}) = {flo} !< f({hi}) = {fhi}");
        prop_assert!((0.0..=1.0).contains(&flo) && (0.0..=1.0).contains(&fhi));
    }

    /// The branch rule never rotates by more than a half-turn.
    #[test]
    fn angle_step_stays_within_half_turn(
        theta in -50.0f64..50.0,
        g in 1.0f64..10.0,
        lambda in 1.0f64..1000.0,
    ) {
        let phi = angle_step(theta, g, lambda);
        prop_assert!((phi - theta).abs() <= std::f64::consts::PI + 1e-9,
            "theta {theta}, phi {phi}");
    }

    /// Signed-log arithmetic agrees with plain floats inside their range.
    #[test]
    fn logdet_arithmetic_matches_f64(a in -1e6f64..1e6, b in -1e6f64..1e6) {
        let la = LogDet::from_value(a);
        let lb = LogDet::from_value(b);
        let prod = la.mul(&lb).to_f64();
        prop_assert!((prod - a * b).abs() <= 1e-9 * (a * b).abs().max(1e-300));
        if b != 0.0 {
            let quot = la.div(&lb).unwrap().to_f64();
            prop_assert!((quot - a / b).abs() <= 1e-9 * (a / b).abs().max(1e-300));
        }
    }
}
