//! Exact torus points for the doubling map.
//!
//! A phase x ∈ [0,1) is stored as its leading binary digits, so the map
//! T(x) = 2x mod 1 is a pure index advance: no data moves and no precision
//! is lost beyond the digits that were never stored. Plain f64 phases lose
//! one exact bit per doubling, which corrupts orbits after ~50 steps; here
//! an orbit of length n needs `n + GUARD_BITS` stored bits, decided up
//! front by the caller.

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};

/// Minimum number of significant bits every real extraction must leave
/// untouched at the end of an orbit.
pub const GUARD_BITS: usize = 64;

/// Bits handed to f64 extraction; more would be lost to the 53-bit mantissa.
pub const F64_DIGITS: usize = 53;

/// A point of the torus with an explicit finite binary expansion.
///
/// Bits are packed MSB-first into 64-bit words and shared behind an `Arc`,
/// so applying the doubling map is O(1) and clones are cheap. Values are
/// immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicPhase {
    words: Arc<[u64]>,
    /// Total stored bits b₁b₂…b_P of the original point.
    precision: usize,
    /// Doublings already applied; the current point starts at bit `consumed`.
    consumed: usize,
}

impl DyadicPhase {
    /// Builds the phase `numerator/denominator` truncated to `precision`
    /// binary digits.
    ///
    /// Truncation (never rounding) matches the shift semantics of the
    /// doubling map. Dyadic denominators are accepted but flagged with a
    /// warning: their orbits hit the sampling-function discontinuity at 0.
    pub fn from_rational(numerator: u64, denominator: u64, precision: usize) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::invalid("from_rational: denominator must be nonzero"));
        }
        if numerator >= denominator {
            return Err(Error::invalid(format!(
                "from_rational: need numerator < denominator, got {numerator}/{denominator}"
            )));
        }
        if precision == 0 {
            return Err(Error::invalid("from_rational: precision must be at least 1"));
        }
        if denominator.is_power_of_two() {
            log::warn!(
                "dyadic phase {numerator}/{denominator}: orbit reaches the jump discontinuity at 0"
            );
        }
        let n_words = precision.div_ceil(64);
        let mut words = vec![0u64; n_words];
        let mut rem = numerator as u128;
        let den = denominator as u128;
        for j in 0..precision {
            rem <<= 1;
            if rem >= den {
                rem -= den;
                words[j / 64] |= 1u64 << (63 - (j % 64));
            }
        }
        Ok(Self {
            words: words.into(),
            precision,
            consumed: 0,
        })
    }

    /// Draws a phase with `precision` independent fair bits from `rng`.
    pub fn sample_uniform(rng: &mut impl RngCore, precision: usize) -> Result<Self> {
        if precision == 0 {
            return Err(Error::invalid("sample_uniform: precision must be at least 1"));
        }
        let n_words = precision.div_ceil(64);
        let mut words = vec![0u64; n_words];
        for w in words.iter_mut() {
            *w = rng.next_u64();
        }
        let rem = precision % 64;
        if rem != 0 {
            words[n_words - 1] &= u64::MAX << (64 - rem);
        }
        Ok(Self {
            words: words.into(),
            precision,
            consumed: 0,
        })
    }

    /// Applies Tⁿ, i.e. shifts the expansion left by `n` bits.
    ///
    /// Fails once fewer than [`GUARD_BITS`] exact bits would remain, so no
    /// downstream extraction can silently read noise.
    pub fn double(&self, n: usize) -> Result<Self> {
        let available = self.precision - self.consumed;
        if n + GUARD_BITS > available {
            return Err(Error::PrecisionExhausted {
                needed: n + GUARD_BITS,
                available,
            });
        }
        Ok(Self {
            words: Arc::clone(&self.words),
            precision: self.precision,
            consumed: self.consumed + n,
        })
    }

    /// Truncates the current point to `digits` bits and returns it as f64.
    ///
    /// Exact for `digits` ≤ 53; for 54..=64 the integer of leading bits is
    /// rounded to the nearest representable double. Error ≤ 2^-digits.
    pub fn to_real(&self, digits: usize) -> Result<f64> {
        let available = self.precision - self.consumed;
        if digits == 0 || digits > 64 {
            return Err(Error::invalid(format!(
                "to_real: digits must be in 1..=64, got {digits}"
            )));
        }
        if digits > available {
            return Err(Error::PrecisionExhausted {
                needed: digits,
                available,
            });
        }
        let lead = self.leading_word();
        let top = if digits == 64 { lead } else { lead >> (64 - digits) };
        Ok(top as f64 * (-(digits as f64)).exp2())
    }

    /// Current point as f64 using the standard 53-bit extraction.
    pub fn as_f64(&self) -> Result<f64> {
        let digits = F64_DIGITS.min(self.precision - self.consumed);
        self.to_real(digits)
    }

    pub fn precision(&self) -> usize {
        self.precision
    }

    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Exact bits still available for the current point.
    pub fn remaining_bits(&self) -> usize {
        self.precision - self.consumed
    }

    /// First step k ≤ n at which Tᵏx is exactly 0 within stored precision,
    /// if any. Sampled phases hit this with probability ~2^-(P-n); dyadic
    /// rationals hit it deterministically.
    pub fn zero_hit_within(&self, n: usize) -> Option<usize> {
        let last_set = match self.last_set_bit() {
            None => return Some(0), // the point is exactly 0 already
            Some(p) => p,
        };
        if last_set <= self.consumed {
            return Some(0);
        }
        let k = last_set - self.consumed;
        (k <= n).then_some(k)
    }

    /// 1-based position of the last set bit, or None if all bits are zero
    /// (the point is exactly 0).
    fn last_set_bit(&self) -> Option<usize> {
        for (w, &word) in self.words.iter().enumerate().rev() {
            if word != 0 {
                let within = 63 - word.trailing_zeros() as usize;
                return Some(w * 64 + within + 1);
            }
        }
        None
    }

    /// 64 bits starting at the current read position (zero-padded past the
    /// stored precision).
    fn leading_word(&self) -> u64 {
        let w = self.consumed / 64;
        let s = self.consumed % 64;
        let hi = self.words.get(w).copied().unwrap_or(0);
        if s == 0 {
            hi
        } else {
            let lo = self.words.get(w + 1).copied().unwrap_or(0);
            (hi << s) | (lo >> (64 - s))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bits_string(x: &DyadicPhase, n: usize) -> String {
        let mut p = x.clone();
        let mut s = String::new();
        for _ in 0..n {
            let v = p.to_real(1).unwrap();
            s.push(if v >= 0.5 { '1' } else { '0' });
            p = DyadicPhase {
                words: Arc::clone(&p.words),
                precision: p.precision,
                consumed: p.consumed + 1,
            };
        }
        s
    }

    #[test]
    fn from_rational_one_third() {
        let x = DyadicPhase::from_rational(1, 3, 8).unwrap();
        assert_eq!(bits_string(&x, 8), "01010101");
    }

    #[test]
    fn from_rational_zero_and_five_eighths() {
        let z = DyadicPhase::from_rational(0, 1, 8).unwrap();
        assert_eq!(bits_string(&z, 8), "00000000");
        let x = DyadicPhase::from_rational(5, 8, 4).unwrap();
        assert_eq!(bits_string(&x, 4), "1010");
    }

    #[test]
    fn from_rational_rejects_bad_inputs() {
        assert!(DyadicPhase::from_rational(1, 0, 8).is_err());
        assert!(DyadicPhase::from_rational(3, 3, 8).is_err());
        assert!(DyadicPhase::from_rational(1, 3, 0).is_err());
    }

    #[test]
    fn double_shifts_one_third() {
        let x = DyadicPhase::from_rational(1, 3, 256).unwrap();
        let y = x.double(1).unwrap();
        assert!((y.to_real(52).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let z = DyadicPhase::from_rational(5, 8, 128).unwrap().double(1).unwrap();
        assert!((z.to_real(52).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn zero_is_fixed_point() {
        let z = DyadicPhase::from_rational(0, 1, 256).unwrap();
        let w = z.double(100).unwrap();
        assert_eq!(w.to_real(52).unwrap(), 0.0);
        assert_eq!(z.zero_hit_within(0), Some(0));
    }

    #[test]
    fn double_respects_guard() {
        let x = DyadicPhase::from_rational(1, 3, 128).unwrap();
        assert!(x.double(64).is_ok());
        assert!(matches!(
            x.double(65),
            Err(Error::PrecisionExhausted { .. })
        ));
    }

    #[test]
    fn to_real_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let _ = &mut rng;
        let x = DyadicPhase::from_rational(1, 2, 8).unwrap();
        assert_eq!(x.to_real(4).unwrap(), 0.5);
        let t = DyadicPhase::from_rational(1, 3, 64).unwrap();
        assert!((t.to_real(52).unwrap() - 1.0 / 3.0).abs() <= 2f64.powi(-52));
        let f = DyadicPhase::from_rational(15, 16, 4).unwrap();
        assert_eq!(f.to_real(4).unwrap(), 0.9375);
        assert!(f.to_real(5).is_err());
    }

    #[test]
    fn sample_uniform_is_deterministic_per_stream() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        a.set_stream(0);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        b.set_stream(0);
        let xa = DyadicPhase::sample_uniform(&mut a, 200).unwrap();
        let xb = DyadicPhase::sample_uniform(&mut b, 200).unwrap();
        assert_eq!(xa, xb);
        assert!(DyadicPhase::sample_uniform(&mut a, 0).is_err());
    }

    #[test]
    fn sample_uniform_mean_is_half() {
        let n = 10_000;
        let mut acc = 0.0;
        for i in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            rng.set_stream(i);
            let x = DyadicPhase::sample_uniform(&mut rng, 128).unwrap();
            acc += x.to_real(52).unwrap();
        }
        let mean = acc / n as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn zero_hit_detection_on_dyadic() {
        // 5/8 -> 1/4 -> 1/2 -> 0
        let x = DyadicPhase::from_rational(5, 8, 128).unwrap();
        assert_eq!(x.zero_hit_within(10), Some(3));
        assert_eq!(x.zero_hit_within(2), None);
        let y = DyadicPhase::from_rational(1, 3, 128).unwrap();
        assert_eq!(y.zero_hit_within(60), None);
    }

    #[test]
    fn shift_matches_exact_modular_arithmetic() {
        // to_real(double(x,n), 52) == (2^n p mod q)/q within 2^-52 for odd q.
        let cases = [(1u64, 3u64), (2, 7), (5, 11), (123, 1023), (400_000, 999_999)];
        let precision = 256;
        for &(p, q) in &cases {
            let x = DyadicPhase::from_rational(p, q, precision).unwrap();
            for n in [0usize, 1, 17, 63, precision - GUARD_BITS] {
                let shifted = x.double(n).unwrap();
                let mut num = p as u128;
                for _ in 0..n {
                    num = (num * 2) % q as u128;
                }
                let exact = num as f64 / q as f64;
                let got = shifted.to_real(52).unwrap();
                assert!(
                    (got - exact).abs() <= 2f64.powi(-52) + 1e-15,
                    "p/q={p}/{q} n={n}: got {got}, exact {exact}"
                );
            }
        }
    }
}
