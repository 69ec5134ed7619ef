//! Small dense linear algebra on row-major `f64` slices: Householder QR
//! least squares, a cyclic Jacobi eigensolver for symmetric matrices, and a
//! spectral square root for covariance sampling.
//!
//! The problem sizes in this crate are tiny (6-column regression designs,
//! covariance matrices up to a few hundred rows), so plain dense algorithms
//! with deterministic iteration order are both fast enough and exactly
//! reproducible run to run.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Solves the least-squares problem `min ||A x - b||` for row-major `a`
/// (`rows x cols`, `rows >= cols`) by Householder QR.
///
/// # Errors
/// - `Error::Shape` on dimension mismatches;
/// - `Error::Fit` if the design matrix is numerically rank deficient.
pub fn lstsq(a: &[f64], rows: usize, cols: usize, b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != rows * cols || b.len() != rows {
        return Err(Error::shape(format!(
            "lstsq: A is {}x{} with {} entries, b has {}",
            rows,
            cols,
            a.len(),
            b.len()
        )));
    }
    if rows < cols {
        return Err(Error::shape(format!(
            "lstsq: underdetermined system ({rows} rows < {cols} cols)"
        )));
    }
    let mut r = a.to_vec();
    let mut rhs = b.to_vec();
    let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);

    for k in 0..cols {
        // Householder vector for column k below the diagonal.
        let mut norm2 = 0.0;
        for i in k..rows {
            let v = r[i * cols + k];
            norm2 += v * v;
        }
        let norm = norm2.sqrt();
        let akk = r[k * cols + k];
        let alpha = if akk >= 0.0 { -norm } else { norm };
        let v0 = akk - alpha;
        let vnorm2 = norm2 - akk * akk + v0 * v0;
        if vnorm2 > 0.0 {
            // Apply I - 2 v v^T / (v^T v) to the trailing columns and rhs,
            // with v = (v0, r[k+1.., k]) read in place. Column k itself is
            // not transformed explicitly: its image is (alpha, 0, ..., 0),
            // and the stored sub-diagonal entries must stay intact while the
            // reflector is applied to the other columns.
            for j in k + 1..cols {
                let mut dot = v0 * r[k * cols + j];
                for i in k + 1..rows {
                    dot += r[i * cols + k] * r[i * cols + j];
                }
                let f = 2.0 * dot / vnorm2;
                r[k * cols + j] -= f * v0;
                for i in k + 1..rows {
                    r[i * cols + j] -= f * r[i * cols + k];
                }
            }
            let mut dot = v0 * rhs[k];
            for i in k + 1..rows {
                dot += r[i * cols + k] * rhs[i];
            }
            let f = 2.0 * dot / vnorm2;
            rhs[k] -= f * v0;
            for i in k + 1..rows {
                rhs[i] -= f * r[i * cols + k];
            }
        }
        r[k * cols + k] = alpha;
    }

    // Back substitution on the upper-triangular factor.
    let tol = 1e-12 * scale * (rows.max(cols) as f64);
    let mut x = vec![0.0; cols];
    for k in (0..cols).rev() {
        let diag = r[k * cols + k];
        if diag.abs() <= tol {
            return Err(Error::fit(format!(
                "rank-deficient design matrix (pivot {k} is {diag:.3e})"
            )));
        }
        let mut s = rhs[k];
        for j in k + 1..cols {
            s -= r[k * cols + j] * x[j];
        }
        x[k] = s / diag;
    }
    Ok(x)
}

/// Eigen-decomposition of a symmetric matrix.
///
/// `values` are sorted in descending order; row `k` of `vectors` is the unit
/// eigenvector for `values[k]`, with its sign fixed so the component of
/// largest magnitude (first such index on ties) is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
    pub n: usize,
}

impl SymEigen {
    /// Row `k` of the eigenvector matrix.
    pub fn vector(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.n..(k + 1) * self.n]
    }
}

/// Cyclic Jacobi eigensolver for a symmetric row-major matrix.
///
/// # Errors
/// - `Error::Shape` if `a` is not `n x n`;
/// - `Error::Data` if `a` is not symmetric to within 1e-9 of its scale.
pub fn sym_eigen(a: &[f64], n: usize) -> Result<SymEigen> {
    if a.len() != n * n {
        return Err(Error::shape(format!(
            "sym_eigen: expected {}x{} = {} entries, got {}",
            n,
            n,
            n * n,
            a.len()
        )));
    }
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Vec::new(),
            n: 0,
        });
    }
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    for i in 0..n {
        for j in i + 1..n {
            if (a[i * n + j] - a[j * n + i]).abs() > 1e-9 * scale {
                return Err(Error::data(format!(
                    "sym_eigen: matrix not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    // Work on the exactly symmetrized copy for determinism.
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = 0.5 * (a[i * n + j] + a[j * n + i]);
        }
    }
    // V accumulates rotations; its columns converge to eigenvectors.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    for _sweep in 0..60 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off.sqrt() <= 1e-15 * scale * n as f64 {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq.abs() <= 1e-300 * scale {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns p and q of M.
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                // Accumulate into V (columns are eigenvectors).
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    // Sort descending by eigenvalue; extract columns of V as rows.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[j * n + j]
            .partial_cmp(&m[i * n + i])
            .unwrap_or(core::cmp::Ordering::Equal)
    });
    let mut values = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for (row, &col) in order.iter().enumerate() {
        values.push(m[col * n + col]);
        // Sign convention: component of largest magnitude is positive.
        let mut imax = 0;
        let mut amax = 0.0;
        for i in 0..n {
            let av = v[i * n + col].abs();
            if av > amax {
                amax = av;
                imax = i;
            }
        }
        let flip = if v[imax * n + col] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[row * n + i] = flip * v[i * n + col];
        }
    }
    Ok(SymEigen { values, vectors, n })
}

/// Spectral square root `L` of a symmetric PSD matrix: `L L^T = cov`, with
/// negative eigenvalues (numerical noise) clamped to zero. Sampling
/// `L z` with `z ~ N(0, I)` then has covariance `cov`.
pub fn spectral_sqrt(cov: &[f64], n: usize) -> Result<Vec<f64>> {
    let eig = sym_eigen(cov, n)?;
    let mut l = vec![0.0; n * n];
    for k in 0..n {
        let lam = eig.values[k].max(0.0).sqrt();
        for i in 0..n {
            l[i * n + k] = eig.vectors[k * n + i] * lam;
        }
    }
    Ok(l)
}
