//! Symmetric eigendecomposition by cyclic Jacobi rotations.
//!
//! A pair is rotated only while `|a_pq| > eps * sqrt(|a_pp a_qq|)`, so the
//! small eigenvalues of graded positive definite matrices are resolved to
//! relative rather than absolute precision.

use crate::error::{Error, Result};

/// Dot product with compensated accumulation (Dot2), accurate to about
/// twice the working precision.
pub fn compensated_dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0_f64;
    let mut c = 0.0_f64;
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let pe = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        let se = (s - (t - z)) + (p - z);
        s = t;
        c += pe + se;
    }
    s + c
}

/// Eigenpairs of a symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub dim: usize,
    /// Descending.
    pub values: Vec<f64>,
    /// Row-major `dim x dim`; column `k` is the eigenvector of `values[k]`.
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.dim).map(|r| self.vectors[r * self.dim + k]).collect()
    }
}

const MAX_SWEEPS: usize = 100;

/// Eigenvalues (descending) and orthonormal eigenvectors of the row-major
/// symmetric `dim x dim` matrix `a`.
pub fn eigen_sym(a: &[f64], dim: usize) -> Result<SymmetricEigen> {
    if a.len() != dim * dim {
        return Err(Error::domain(format!("expected {} entries, got {}", dim * dim, a.len())));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("matrix entries must be finite"));
    }
    let scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
    for r in 0..dim {
        for c in r + 1..dim {
            if (a[r * dim + c] - a[c * dim + r]).abs() > 1e-10 * scale {
                return Err(Error::domain(format!("matrix is not symmetric at ({r}, {c})")));
            }
        }
    }
    let mut m: Vec<f64> = a.to_vec();
    for r in 0..dim {
        for c in r + 1..dim {
            let avg = 0.5 * (m[r * dim + c] + m[c * dim + r]);
            m[r * dim + c] = avg;
            m[c * dim + r] = avg;
        }
    }
    let mut v = vec![0.0; dim * dim];
    for k in 0..dim {
        v[k * dim + k] = 1.0;
    }
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = m[p * dim + q];
                // Relative threshold: small diagonal entries keep their accuracy.
                if apq.abs() <= f64::EPSILON * (m[p * dim + p] * m[q * dim + q]).abs().sqrt() {
                    continue;
                }
                rotated = true;
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for k in 0..dim {
                    let mkp = m[k * dim + p];
                    let mkq = m[k * dim + q];
                    m[k * dim + p] = c * mkp - s * mkq;
                    m[k * dim + q] = s * mkp + c * mkq;
                }
                for k in 0..dim {
                    let mpk = m[p * dim + k];
                    let mqk = m[q * dim + k];
                    m[p * dim + k] = c * mpk - s * mqk;
                    m[q * dim + k] = s * mpk + c * mqk;
                }
                m[p * dim + q] = 0.0;
                m[q * dim + p] = 0.0;
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numeric(format!(
            "Jacobi iteration did not converge in {MAX_SWEEPS} sweeps"
        )));
    }
    let mut order: Vec<usize> = (0..dim).collect();
    // Stable sort keeps the original axis order among equal eigenvalues.
    order.sort_by(|&x, &y| m[y * dim + y].total_cmp(&m[x * dim + x]));
    let values = order.iter().map(|&k| m[k * dim + k]).collect();
    let mut vectors = vec![0.0; dim * dim];
    for (new, &old) in order.iter().enumerate() {
        for r in 0..dim {
            vectors[r * dim + new] = v[r * dim + old];
        }
    }
    Ok(SymmetricEigen { dim, values, vectors })
}
