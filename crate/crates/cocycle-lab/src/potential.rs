//! The sampling function f that generates the potential λ·f(Tⁿx).
//!
//! Admissible profiles are strictly increasing on (0,1) with slopes in
//! (0, 1], normalized to f(0) = 0 and f(1⁻) = 1. On the torus this makes
//! x = 0 a jump discontinuity, with f right-continuous there. The identity
//! profile is the extremal admissible case and keeps several quantities
//! analytically checkable; piecewise-linear profiles cover the rest of the
//! class with slopes that stay verifiable at construction time.

use crate::error::{Error, Result};
use crate::phase::{DyadicPhase, F64_DIGITS};

#[derive(Debug, Clone, PartialEq)]
enum Profile {
    Identity,
    /// Breakpoints (x, f(x)), strictly increasing in both coordinates,
    /// first (0,0) and last (1,1).
    PiecewiseLinear(Vec<(f64, f64)>),
}

/// Monotone sampling profile with certified derivative bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingFunction {
    profile: Profile,
    derivative_floor: f64,
    derivative_ceiling: f64,
    c1_norm_bound: f64,
}

impl SamplingFunction {
    /// The canonical profile f(x) = x.
    pub fn identity() -> Self {
        Self {
            profile: Profile::Identity,
            derivative_floor: 1.0,
            derivative_ceiling: 1.0,
            c1_norm_bound: 2.0,
        }
    }

    /// Piecewise-linear profile through the given breakpoints.
    ///
    /// Rejects anything that is not strictly increasing or not anchored at
    /// (0,0) and (1,1). Slopes may exceed 1 — with the (0,0)→(1,1) anchors
    /// the mean slope is exactly 1, so any non-identity profile must — and
    /// the realized floor/ceiling are recorded for downstream bounds.
    pub fn piecewise_linear(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::invalid("piecewise_linear: need at least 2 breakpoints"));
        }
        let first = breakpoints[0];
        let last = breakpoints[breakpoints.len() - 1];
        if first != (0.0, 0.0) || last != (1.0, 1.0) {
            return Err(Error::invalid(
                "piecewise_linear: breakpoints must start at (0,0) and end at (1,1)",
            ));
        }
        let mut floor = f64::INFINITY;
        let mut ceiling: f64 = 0.0;
        for pair in breakpoints.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            if x1 <= x0 || y1 <= y0 {
                return Err(Error::invalid(format!(
                    "piecewise_linear: breakpoints must be strictly increasing, got ({x0},{y0}) then ({x1},{y1})"
                )));
            }
            let slope = (y1 - y0) / (x1 - x0);
            floor = floor.min(slope);
            ceiling = ceiling.max(slope);
        }
        Ok(Self {
            profile: Profile::PiecewiseLinear(breakpoints),
            derivative_floor: floor,
            derivative_ceiling: ceiling,
            c1_norm_bound: 1.0 + ceiling,
        })
    }

    /// Evaluates f at x ∈ [0,1). f(0) = 0 by right-continuity.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::invalid(format!("eval_f: x must lie in [0,1), got {x}")));
        }
        Ok(match &self.profile {
            Profile::Identity => x,
            Profile::PiecewiseLinear(points) => {
                let idx = points.partition_point(|&(bx, _)| bx <= x);
                // idx >= 1 because points[0].0 == 0.0 <= x.
                let (x0, y0) = points[idx - 1];
                let (x1, y1) = points[idx.min(points.len() - 1)];
                if x1 == x0 {
                    y0
                } else {
                    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
                }
            }
        })
    }

    /// Potential value λ·f(Tⁿx), extracting the phase at full f64 precision.
    pub fn potential_at(&self, lambda: f64, x: &DyadicPhase, n: usize) -> Result<f64> {
        let shifted = x.double(n)?;
        let xv = shifted.to_real(F64_DIGITS)?;
        Ok(lambda * self.eval(xv)?)
    }

    /// Infimum of f′ over the linear pieces.
    pub fn derivative_floor(&self) -> f64 {
        self.derivative_floor
    }

    /// Supremum of f′ over the linear pieces.
    pub fn derivative_ceiling(&self) -> f64 {
        self.derivative_ceiling
    }

    /// Bound on ‖f‖_{C¹(0,1)}.
    pub fn c1_norm_bound(&self) -> f64 {
        self.c1_norm_bound
    }
}
