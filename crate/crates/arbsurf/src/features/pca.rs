//! Principal-component features of daily log-surface movements.
//!
//! The fit takes one-day differences of log vols, `U_t = ln s_t - ln s_{t-1}`,
//! demeans them, and eigendecomposes their sample covariance (1/(n-1)
//! normalization). A day encodes as inner products against the leading
//! eigenvectors relative to a frozen baseline — the first training day's
//! log surface `X0`:
//!
//! ```text
//! x_k(t) = < X_t - X0, f_k >,      decode: s(m,tau) = exp(X0 + sum_k x_k f_k).
//! ```
//!
//! The eigenvector set is complete and orthonormal, so the full-rank
//! encode/decode pair is the identity; truncating to the leading K
//! components gives the best rank-K reconstruction in the usual
//! least-squares sense.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::GriddedSurface;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;
use crate::nn::{NetworkParams, Tensor};

/// Eigenbasis of log-surface movements plus the frozen baseline day.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// Log vols of the first training day.
    pub x0: Vec<f64>,
    /// All eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Row-major eigenvectors: `vectors[k*dim..(k+1)*dim]` is the k-th.
    pub vectors: Vec<f64>,
    /// Default number of retained components.
    pub k: usize,
}

pub const PCA_MODEL_KIND: &str = "pca-basis";

impl PcaBasis {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    pub fn vector(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.vectors[k * d..(k + 1) * d]
    }

    /// Fractions of total variance carried by each component; entries lie
    /// in [0, 1] and sum to 1 (tiny negative eigenvalues are clipped).
    pub fn explained_variance(&self) -> Vec<f64> {
        let clipped: Vec<f64> = self.eigenvalues.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = clipped.iter().sum();
        if total <= 0.0 {
            // Degenerate (constant) panel: spread evenly so fractions still
            // sum to one.
            return vec![1.0 / clipped.len() as f64; clipped.len()];
        }
        clipped.iter().map(|&v| v / total).collect()
    }

    pub fn to_params(&self) -> NetworkParams {
        let d = self.dim();
        NetworkParams {
            model_kind: PCA_MODEL_KIND.to_string(),
            layers: Vec::new(),
            norms: Vec::new(),
            tensors: vec![
                ("x0".to_string(), Tensor::row(self.x0.clone())),
                (
                    "eigenvalues".to_string(),
                    Tensor::row(self.eigenvalues.clone()),
                ),
                (
                    "vectors".to_string(),
                    Tensor {
                        rows: d,
                        cols: d,
                        values: self.vectors.clone(),
                    },
                ),
                ("k".to_string(), Tensor::row(vec![self.k as f64])),
            ],
        }
    }

    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        if params.model_kind != PCA_MODEL_KIND {
            return Err(Error::format(format!(
                "expected {PCA_MODEL_KIND:?} parameters, found {:?}",
                params.model_kind
            )));
        }
        let x0 = params.tensor("x0")?.values.clone();
        let eigenvalues = params.tensor("eigenvalues")?.values.clone();
        let vectors = params.tensor("vectors")?;
        let k = params.tensor("k")?.values[0] as usize;
        let d = x0.len();
        if eigenvalues.len() != d || vectors.rows != d || vectors.cols != d || k > d {
            return Err(Error::format("inconsistent basis tensor shapes"));
        }
        Ok(Self {
            x0,
            eigenvalues,
            vectors: vectors.values.clone(),
            k,
        })
    }
}

fn log_vols(g: &GriddedSurface) -> Result<Vec<f64>> {
    g.vols
        .iter()
        .map(|&v| {
            if v > 0.0 && v.is_finite() {
                Ok(v.ln())
            } else {
                Err(Error::data(format!(
                    "day {}: vols must be positive to take logs, got {v}",
                    g.date
                )))
            }
        })
        .collect()
}

/// Fits the eigenbasis on a training panel. `k` is the default retained
/// component count.
///
/// # Errors
/// `Error::Data` with fewer than 3 days (2 differences) or non-positive
/// vols; `Error::Config` if `k` exceeds the grid size.
pub fn pca_fit(train: &[GriddedSurface], k: usize) -> Result<PcaBasis> {
    if train.len() < 3 {
        return Err(Error::data(format!(
            "eigenbasis fit needs at least 3 days (2 log-differences), got {}",
            train.len()
        )));
    }
    let d = train[0].vols.len();
    if k > d {
        return Err(Error::config(format!(
            "retained components k={k} exceed grid size {d}"
        )));
    }
    let logs: Vec<Vec<f64>> = train
        .iter()
        .map(|g| {
            if g.vols.len() != d {
                return Err(Error::shape(format!(
                    "day {}: {} vols, expected {d}",
                    g.date,
                    g.vols.len()
                )));
            }
            log_vols(g)
        })
        .collect::<Result<_>>()?;

    let n_u = logs.len() - 1;
    let mut diffs = vec![0.0; n_u * d];
    for t in 1..logs.len() {
        for i in 0..d {
            diffs[(t - 1) * d + i] = logs[t][i] - logs[t - 1][i];
        }
    }
    let mut mean = vec![0.0; d];
    for row in diffs.chunks_exact(d) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n_u as f64;
    }
    for row in diffs.chunks_exact_mut(d) {
        for (v, &m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }

    let norm = 1.0 / (n_u - 1).max(1) as f64;
    let mut cov = vec![0.0; d * d];
    for row in diffs.chunks_exact(d) {
        for a in 0..d {
            let ra = row[a];
            if ra == 0.0 {
                continue;
            }
            let dst = &mut cov[a * d..(a + 1) * d];
            for (c, &rb) in dst.iter_mut().zip(row) {
                *c += ra * rb;
            }
        }
    }
    for c in &mut cov {
        *c *= norm;
    }

    let eigen = sym_eigen(&cov, d)?;
    Ok(PcaBasis {
        x0: logs[0].clone(),
        eigenvalues: eigen.values,
        vectors: eigen.vectors,
        k,
    })
}

/// Projects a day's gridded vols onto the leading `k` components.
pub fn pca_encode(basis: &PcaBasis, vols: &[f64], k: usize) -> Result<Vec<f64>> {
    let d = basis.dim();
    if k > d {
        return Err(Error::config(format!(
            "k={k} components requested from a {d}-vector basis"
        )));
    }
    if vols.len() != d {
        return Err(Error::shape(format!(
            "encode: {} vols against a {d}-node basis",
            vols.len()
        )));
    }
    let mut centered = Vec::with_capacity(d);
    for (i, &v) in vols.iter().enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::data(format!("encode: non-positive vol {v}")));
        }
        centered.push(v.ln() - basis.x0[i]);
    }
    Ok((0..k)
        .map(|j| {
            basis
                .vector(j)
                .iter()
                .zip(&centered)
                .map(|(&f, &c)| f * c)
                .sum()
        })
        .collect())
}

/// Reconstructs gridded vols from component coefficients:
/// `exp(X0 + sum_k coeffs[k] * f_k)`.
pub fn pca_decode(basis: &PcaBasis, coeffs: &[f64]) -> Result<Vec<f64>> {
    let d = basis.dim();
    if coeffs.len() > d {
        return Err(Error::config(format!(
            "{} coefficients against a {d}-vector basis",
            coeffs.len()
        )));
    }
    let mut log = basis.x0.clone();
    for (j, &c) in coeffs.iter().enumerate() {
        for (l, &f) in log.iter_mut().zip(basis.vector(j)) {
            *l += c * f;
        }
    }
    Ok(log.into_iter().map(|l| l.exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::NaiveDate;
    use crate::nn::{load_params, save_params};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    fn day(i: u64, vols: Vec<f64>) -> GriddedSurface {
        let base = chrono::Datelike::num_days_from_ce(
            &NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
        );
        GriddedSurface {
            date: NaiveDate::from_num_days_from_ce_opt(base + i as i32).unwrap(),
            vols,
        }
    }

    /// Panel whose log-surface wiggles in several directions.
    fn random_panel(dim: usize, days: usize, seed: u64) -> Vec<GriddedSurface> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut log: Vec<f64> = (0..dim).map(|i| -1.5 + 0.01 * i as f64).collect();
        (0..days as u64)
            .map(|t| {
                for l in log.iter_mut() {
                    *l += 0.05 * crate::math::std_normal(&mut rng);
                }
                day(t, log.iter().map(|&l| l.exp()).collect())
            })
            .collect()
    }

    #[test]
    fn single_direction_movements_give_a_rank_one_spectrum() {
        // Log increments proportional to a fixed direction u.
        let dim = 8;
        let u: Vec<f64> = (0..dim).map(|i| ((i as f64) * 0.9).sin() + 1.5).collect();
        let unorm = {
            let n: f64 = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            u.iter().map(|v| v / n).collect::<Vec<f64>>()
        };
        let coeffs = [0.0, 0.08, -0.05, 0.11, 0.02, -0.09];
        let mut log = vec![-1.6; dim];
        let panel: Vec<GriddedSurface> = coeffs
            .iter()
            .enumerate()
            .map(|(t, &c)| {
                for (l, &ui) in log.iter_mut().zip(&u) {
                    *l += c * ui;
                }
                day(t as u64, log.iter().map(|&l| l.exp()).collect())
            })
            .collect();

        let basis = pca_fit(&panel, 3).unwrap();
        let ev = basis.explained_variance();
        assert!(ev[0] > 1.0 - 1e-10, "first component explains {}", ev[0]);
        assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let dot: f64 = basis
            .vector(0)
            .iter()
            .zip(&unorm)
            .map(|(&a, &b)| a * b)
            .sum();
        assert!((dot.abs() - 1.0).abs() < 1e-8, "f1 aligns with u: {dot}");
    }

    #[test]
    fn constant_panel_has_zero_spectrum() {
        let panel: Vec<GriddedSurface> = (0..5).map(|t| day(t, vec![0.2; 6])).collect();
        let basis = pca_fit(&panel, 2).unwrap();
        assert!(basis.eigenvalues.iter().all(|&v| v.abs() < 1e-14));
    }

    #[test]
    fn eigenvectors_are_orthonormal_and_eigenvalues_ordered() {
        let panel = random_panel(10, 30, 4);
        let basis = pca_fit(&panel, 3).unwrap();
        let d = basis.dim();
        for a in 0..d {
            for b in a..d {
                let dot: f64 = basis
                    .vector(a)
                    .iter()
                    .zip(basis.vector(b))
                    .map(|(&x, &y)| x * y)
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "({a},{b}): {dot}");
            }
        }
        for w in basis.eigenvalues.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(basis.eigenvalues.iter().all(|&v| v >= -1e-10));
        let ev = basis.explained_variance();
        assert!(ev.iter().all(|&f| (0.0..=1.0).contains(&f)));
        assert!((ev.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn baseline_day_encodes_to_zero_and_single_modes_read_back() {
        let panel = random_panel(9, 25, 7);
        let basis = pca_fit(&panel, 3).unwrap();

        let z = pca_encode(&basis, &panel[0].vols, 5).unwrap();
        assert!(z.iter().all(|&c| c.abs() < 1e-10), "baseline encode {z:?}");

        // A surface displaced along f2 alone.
        let vols: Vec<f64> = basis
            .x0
            .iter()
            .zip(basis.vector(1))
            .map(|(&x, &f)| (x + 0.3 * f).exp())
            .collect();
        let z = pca_encode(&basis, &vols, 4).unwrap();
        assert!((z[1] - 0.3).abs() < 1e-10, "x2 = {}", z[1]);
        for (k, &c) in z.iter().enumerate() {
            if k != 1 {
                assert!(c.abs() < 1e-10, "x{k} = {c}");
            }
        }
    }

    #[test]
    fn full_basis_round_trip_is_the_identity() {
        let panel = random_panel(12, 20, 11);
        let basis = pca_fit(&panel, 3).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let target: Vec<f64> = (0..12)
            .map(|_| (0.15 + 0.3 * crate::math::uniform_open01(&mut rng)) as f64)
            .collect();
        let z = pca_encode(&basis, &target, 12).unwrap();
        let back = pca_decode(&basis, &z).unwrap();
        for (a, b) in back.iter().zip(&target) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn truncation_error_shrinks_as_components_are_added() {
        // Orthogonal projection: dropping trailing components can only add
        // energy to the log-space residual, so the reconstruction error is
        // non-increasing in k there.
        let panel = random_panel(10, 40, 3);
        let basis = pca_fit(&panel, 3).unwrap();
        let target = &panel[17].vols;
        let mut last = f64::INFINITY;
        for k in 0..=10 {
            let z = pca_encode(&basis, target, k).unwrap();
            let back = pca_decode(&basis, &z).unwrap();
            let err: f64 = back
                .iter()
                .zip(target)
                .map(|(a, b)| {
                    let d = a.ln() - b.ln();
                    d * d
                })
                .sum();
            assert!(
                err <= last + 1e-12,
                "error grew from {last} to {err} at k={k}"
            );
            last = err;
        }
        assert!(last < 1e-20, "full reconstruction error {last}");
    }

    #[test]
    fn decode_with_zero_coefficients_is_the_baseline() {
        let panel = random_panel(7, 10, 9);
        let basis = pca_fit(&panel, 2).unwrap();
        let back = pca_decode(&basis, &[]).unwrap();
        for (a, b) in back.iter().zip(&panel[0].vols) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs_error() {
        let panel = random_panel(6, 2, 1);
        assert!(matches!(pca_fit(&panel, 1), Err(Error::Data(_))));

        let panel = random_panel(6, 8, 1);
        assert!(matches!(pca_fit(&panel, 7), Err(Error::Config(_))));
        let basis = pca_fit(&panel, 3).unwrap();
        assert!(matches!(
            pca_encode(&basis, &panel[0].vols, 9),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            pca_encode(&basis, &[0.2; 4], 2),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            pca_decode(&basis, &[0.0; 9]),
            Err(Error::Config(_))
        ));

        let mut bad = random_panel(6, 5, 2);
        bad[2].vols[3] = -0.1;
        assert!(matches!(pca_fit(&bad, 2), Err(Error::Data(_))));
    }

    #[test]
    fn basis_serialization_round_trips() {
        let panel = random_panel(8, 15, 6);
        let basis = pca_fit(&panel, 3).unwrap();
        let bytes = save_params(&basis.to_params()).unwrap();
        let loaded = PcaBasis::from_params(&load_params(&bytes, PCA_MODEL_KIND).unwrap()).unwrap();
        assert_eq!(basis, loaded);
    }
}
