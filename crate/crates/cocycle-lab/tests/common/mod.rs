//! Independent oracles for the acceptance suite. Everything here computes
//! expected values by a route disjoint from the implementation it checks:
//! dense no-renormalization products, dense Gaussian-elimination inverses,
//! exact binomial tails, and the exact-SVD polar conjugation.

use cocycle_lab::cocycle::SL2Matrix;

/// Dense tridiagonal inverse by full Gaussian elimination with partial
/// pivoting (unit off-diagonals), for small sizes.
pub fn dense_inverse(diag: &[f64], energy: f64) -> Vec<Vec<f64>> {
    let n = diag.len();
    let mut a = vec![vec![0.0f64; 2 * n]; n];
    for i in 0..n {
        a[i][i] = diag[i] - energy;
        if i > 0 {
            a[i][i - 1] = 1.0;
        }
        if i + 1 < n {
            a[i][i + 1] = 1.0;
        }
        a[i][n + i] = 1.0;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .unwrap();
        a.swap(col, piv);
        let p = a[col][col];
        for j in col..2 * n {
            a[col][j] /= p;
        }
        for r in 0..n {
            if r != col && a[r][col] != 0.0 {
                let m = a[r][col];
                for j in col..2 * n {
                    a[r][j] -= m * a[col][j];
                }
            }
        }
    }
    (0..n).map(|i| a[i][n..].to_vec()).collect()
}

/// Exact two-sided tail P(|S_r / r| > delta) for S_r a sum of r fair
/// signs, via log-binomial coefficients.
pub fn binomial_sign_tail(r: usize, delta: f64) -> f64 {
    let mut log_fact = vec![0.0f64; r + 1];
    for i in 1..=r {
        log_fact[i] = log_fact[i - 1] + (i as f64).ln();
    }
    let log_half_pow = r as f64 * 0.5f64.ln();
    let mut tail = 0.0;
    for m in 0..=r {
        let s = 2.0 * m as f64 - r as f64;
        if s.abs() > delta * r as f64 {
            tail += (log_fact[r] - log_fact[m] - log_fact[r - m] + log_half_pow).exp();
        }
    }
    tail
}

/// The exact polar conjugation factor U(Ty)ᵀ·Ã(Ty)·U(y) where U comes
/// from the SVD of the rescaled transfer matrix Ã = Q·A·Q⁻¹. Products of
/// these factors are exactly orthogonally-plus-Q conjugate to the transfer
/// product, so they satisfy the norm sandwich with no drift.
pub struct ExactPolarWalk {
    lambda: f64,
    u_prev: SL2Matrix,
}

fn rescale_q(a: &SL2Matrix, lambda: f64) -> SL2Matrix {
    SL2Matrix::new(a.a11, a.a12 / lambda, a.a21 * lambda, a.a22)
}

fn svd_left_factor(a: &SL2Matrix) -> SL2Matrix {
    // A = W1 Σ W2ᵀ with W2 from the eigenvectors of AᵀA; W1 = A·W2·Σ⁻¹.
    let ata = SL2Matrix::new(
        a.a11 * a.a11 + a.a21 * a.a21,
        a.a11 * a.a12 + a.a21 * a.a22,
        a.a11 * a.a12 + a.a21 * a.a22,
        a.a12 * a.a12 + a.a22 * a.a22,
    );
    let tr = ata.a11 + ata.a22;
    let det = ata.a11 * ata.a22 - ata.a12 * ata.a21;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let top = tr / 2.0 + disc;
    let (vx, vy) = if ata.a12.abs() > 1e-300 {
        (ata.a12, top - ata.a11)
    } else if ata.a11 >= ata.a22 {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let norm = vx.hypot(vy);
    let w2 = SL2Matrix::new(vx / norm, -vy / norm, vy / norm, vx / norm);
    let s1 = top.sqrt();
    let s2 = 1.0 / s1; // det A = 1
    let aw = a.mul(&w2);
    SL2Matrix::new(aw.a11 / s1, aw.a12 / s2, aw.a21 / s1, aw.a22 / s2)
}

impl ExactPolarWalk {
    /// Starts at the phase value x (the site of the first rotation).
    pub fn start(x_val: f64, energy: f64, lambda: f64) -> Self {
        let a = SL2Matrix::new(energy - lambda * x_val, -1.0, 1.0, 0.0);
        let u = svd_left_factor(&rescale_q(&a, lambda));
        Self { lambda, u_prev: u }
    }

    /// Feeds the next site value Tʸx and returns the exact conjugated
    /// factor at the previous site (identity potential assumed by caller).
    pub fn step(&mut self, next_val: f64, energy: f64) -> SL2Matrix {
        let a = SL2Matrix::new(energy - self.lambda * next_val, -1.0, 1.0, 0.0);
        let at = rescale_q(&a, self.lambda);
        let u_next = svd_left_factor(&at);
        let ut = SL2Matrix::new(u_next.a11, u_next.a21, u_next.a12, u_next.a22);
        let factor = ut.mul(&at).mul(&self.u_prev);
        self.u_prev = u_next;
        factor
    }
}

/// Median of a list (NaNs dropped); panics on an empty list.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().cloned().filter(|x| x.is_finite()).collect();
    assert!(!v.is_empty(), "median of empty list");
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}
