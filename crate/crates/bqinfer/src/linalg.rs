//! Dense symmetric linear algebra: Cholesky factorization with rank-one
//! extension, triangular solves, and a cyclic Jacobi eigensolver for small
//! symmetric matrices.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix of order {order} is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { order: usize, row: usize, pivot: f64 },
    #[error("jacobi eigensolver did not converge (off-diagonal norm {off_norm})")]
    EigenNoConvergence { off_norm: f64 },
}

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    /// Row-major n x n storage; only the lower triangle is meaningful.
    l: Vec<f64>,
}

impl Cholesky {
    /// Factorizes the symmetric matrix `a` (row-major, full storage).
    pub fn new(a: &[f64], n: usize) -> Result<Self, LinalgError> {
        debug_assert_eq!(a.len(), n * n);
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { order: n, row: i, pivot: s });
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    pub fn order(&self) -> usize {
        self.n
    }

    /// Solves L x = b in place.
    pub fn solve_lower(&self, b: &mut [f64]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves L^T x = b in place.
    pub fn solve_lower_transpose(&self, b: &mut [f64]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// Solves (L L^T) x = b.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_lower(&mut x);
        self.solve_lower_transpose(&mut x);
        x
    }

    /// Sum of log-diagonal entries: log det(A) = 2 * sum.
    pub fn log_diag_sum(&self) -> f64 {
        (0..self.n).map(|i| self.l[i * self.n + i].ln()).sum()
    }

    /// Extends the factor by one row for the bordered matrix
    /// `[[A, k], [k^T, kappa]]`. Fails if the Schur complement is not positive.
    pub fn extend(&self, k: &[f64], kappa: f64) -> Result<Self, LinalgError> {
        debug_assert_eq!(k.len(), self.n);
        let n = self.n;
        let m = n + 1;
        let mut z = k.to_vec();
        self.solve_lower(&mut z);
        let schur = kappa - z.iter().map(|v| v * v).sum::<f64>();
        if schur <= 0.0 || !schur.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { order: m, row: n, pivot: schur });
        }
        let mut l = vec![0.0; m * m];
        for i in 0..n {
            l[i * m..i * m + n].copy_from_slice(&self.l[i * n..i * n + n]);
        }
        l[n * m..n * m + n].copy_from_slice(&z);
        l[n * m + n] = schur.sqrt();
        Ok(Self { n: m, l })
    }
}

/// Eigenvalues of a small symmetric matrix (row-major), ascending, via cyclic
/// Jacobi rotations. Residuals reach machine precision for the orders used
/// here (n <= a few dozen).
pub fn sym_eigenvalues(a: &[f64], n: usize) -> Result<Vec<f64>, LinalgError> {
    debug_assert_eq!(a.len(), n * n);
    let mut m = a.to_vec();
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..i {
                s += m[i * n + j] * m[i * n + j];
            }
        }
        s.sqrt()
    };
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0f64, f64::max).max(1e-300);
    for _sweep in 0..64 {
        if off(&m) <= 1e-14 * scale {
            let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
            ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
            return Ok(ev);
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Err(LinalgError::EigenNoConvergence { off_norm: off(&m) })
}
