//! Benchmark surface interpolators: the Dumas-Fleming-Whaley quadratic
//! polynomial and a Nadaraya-Watson kernel estimator.
//!
//! The quadratic model regresses implied vol on surface coordinates,
//!
//! ```text
//! sigma(m, tau) = max(0.01, a0 + a1 m + a2 tau + a3 m^2 + a4 tau^2 + a5 m tau),
//! ```
//!
//! fitted by ordinary least squares; the 0.01 floor keeps evaluated vols
//! strictly positive. The kernel estimator smooths observed vols with a
//! separable Gaussian kernel,
//!
//! ```text
//! sigma_hat(m, tau) = sum_i sigma_i g_i / sum_i g_i,
//! g_i = exp(-(m - m_i)^2 / (2 h_m)) * exp(-(tau - tau_i)^2 / (2 h_tau)),
//! ```
//!
//! (the kernel's 1/(2 pi) prefactor cancels in the ratio and is omitted),
//! with bandwidths chosen by 5-fold cross-validation over a candidate grid.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::surface::{LocalDerivs, SurfacePoint};

/// Floor applied to every evaluated polynomial vol.
pub const DFW_FLOOR: f64 = 0.01;

/// Coefficients of the quadratic vol polynomial, ordered
/// `[1, m, tau, m^2, tau^2, m*tau]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfwCoeffs {
    pub a: [f64; 6],
}

/// A fitted quadratic model with in-sample diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DfwFit {
    pub coeffs: DfwCoeffs,
    /// Root mean squared in-sample error of the floored model.
    pub rmse: f64,
    pub n_points: usize,
}

/// Fits the quadratic polynomial to surface samples by least squares.
///
/// # Errors
/// `Error::Fit` with fewer than 6 points or on a rank-deficient design
/// (e.g. all samples on one maturity line).
pub fn fit_dfw(points: &[SurfacePoint]) -> Result<DfwFit> {
    if points.len() < 6 {
        return Err(Error::fit(format!(
            "quadratic fit needs at least 6 points, got {}",
            points.len()
        )));
    }
    let mut design = Vec::with_capacity(points.len() * 6);
    let mut rhs = Vec::with_capacity(points.len());
    for p in points {
        design.extend_from_slice(&[1.0, p.m, p.tau, p.m * p.m, p.tau * p.tau, p.m * p.tau]);
        rhs.push(p.vol);
    }
    let x = lstsq(&design, points.len(), 6, &rhs)?;
    let coeffs = DfwCoeffs {
        a: [x[0], x[1], x[2], x[3], x[4], x[5]],
    };
    let mut sq = 0.0;
    for p in points {
        let e = eval_dfw(&coeffs, p.m, p.tau) - p.vol;
        sq += e * e;
    }
    Ok(DfwFit {
        coeffs,
        rmse: (sq / points.len() as f64).sqrt(),
        n_points: points.len(),
    })
}

/// Evaluates the floored quadratic model. Total on finite inputs.
pub fn eval_dfw(coeffs: &DfwCoeffs, m: f64, tau: f64) -> f64 {
    let a = &coeffs.a;
    let poly = a[0] + a[1] * m + a[2] * tau + a[3] * m * m + a[4] * tau * tau + a[5] * m * tau;
    poly.max(DFW_FLOOR)
}

/// Value and analytic derivatives of the floored quadratic model. Where the
/// floor binds the surface is locally constant, so all derivatives are zero.
pub fn dfw_derivs(coeffs: &DfwCoeffs, m: f64, tau: f64) -> LocalDerivs {
    let a = &coeffs.a;
    let poly = a[0] + a[1] * m + a[2] * tau + a[3] * m * m + a[4] * tau * tau + a[5] * m * tau;
    if poly < DFW_FLOOR {
        LocalDerivs {
            vol: DFW_FLOOR,
            d_m: 0.0,
            d_mm: 0.0,
            d_tau: 0.0,
        }
    } else {
        LocalDerivs {
            vol: poly,
            d_m: a[1] + 2.0 * a[3] * m + a[5] * tau,
            d_mm: 2.0 * a[3],
            d_tau: a[2] + 2.0 * a[4] * tau + a[5] * m,
        }
    }
}

/// Bandwidth pair of the separable Gaussian kernel (variance scale).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bandwidths {
    pub h_m: f64,
    pub h_tau: f64,
}

impl Bandwidths {
    fn validate(&self) -> Result<()> {
        if !(self.h_m > 0.0 && self.h_tau > 0.0)
            || !self.h_m.is_finite()
            || !self.h_tau.is_finite()
        {
            return Err(Error::config(format!(
                "bandwidths must be finite and positive, got ({}, {})",
                self.h_m, self.h_tau
            )));
        }
        Ok(())
    }
}

/// A kernel estimate, flagged when every kernel weight underflowed to zero
/// and the estimator fell back to the nearest sample in scaled distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NwEstimate {
    pub vol: f64,
    pub fallback: bool,
}

/// Nadaraya-Watson estimate of the vol at `(m, tau)`.
///
/// # Errors
/// - `Error::Data` on an empty sample;
/// - `Error::Config` on non-positive bandwidths.
pub fn nw_estimate(
    points: &[SurfacePoint],
    m: f64,
    tau: f64,
    bw: &Bandwidths,
) -> Result<NwEstimate> {
    bw.validate()?;
    if points.is_empty() {
        return Err(Error::data("kernel estimate requires at least one sample"));
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for p in points {
        let dm = m - p.m;
        let dt = tau - p.tau;
        let g = (-dm * dm / (2.0 * bw.h_m) - dt * dt / (2.0 * bw.h_tau)).exp();
        num += g * p.vol;
        den += g;
    }
    if den > 0.0 {
        return Ok(NwEstimate {
            vol: num / den,
            fallback: false,
        });
    }
    // All weights underflowed: fall back to the nearest sample under the
    // bandwidth-scaled metric (first such index on ties).
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let dm = m - p.m;
        let dt = tau - p.tau;
        let d = dm * dm / bw.h_m + dt * dt / bw.h_tau;
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    Ok(NwEstimate {
        vol: points[best].vol,
        fallback: true,
    })
}

/// Default candidate grid: all pairs over {1e-4, 5e-4, 1e-3, 5e-3, 1e-2,
/// 5e-2}, `h_m`-major.
pub fn default_bandwidth_grid() -> Vec<Bandwidths> {
    const LEVELS: [f64; 6] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2];
    let mut grid = Vec::with_capacity(36);
    for &h_m in &LEVELS {
        for &h_tau in &LEVELS {
            grid.push(Bandwidths { h_m, h_tau });
        }
    }
    grid
}

/// Assigns `n` indices to 5 folds by seeded shuffle, returning the shuffled
/// order and balanced fold boundaries.
fn fold_assignment(n: usize, seed: u64) -> (Vec<usize>, [usize; 6]) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut bounds = [0usize; 6];
    for (f, b) in bounds.iter_mut().enumerate() {
        *b = f * n / 5;
    }
    (order, bounds)
}

/// The 5-fold cross-validation objective minimized by
/// [`nw_select_bandwidths`]: the average over folds of the held-out mean
/// squared error.
pub fn nw_cv_error(points: &[SurfacePoint], bw: &Bandwidths, seed: u64) -> Result<f64> {
    bw.validate()?;
    if points.len() < 10 {
        return Err(Error::data(format!(
            "bandwidth cross-validation needs at least 10 points, got {}",
            points.len()
        )));
    }
    let (order, bounds) = fold_assignment(points.len(), seed);
    let mut total = 0.0;
    for f in 0..5 {
        let held: &[usize] = &order[bounds[f]..bounds[f + 1]];
        if held.is_empty() {
            continue;
        }
        let train: Vec<SurfacePoint> = order[..bounds[f]]
            .iter()
            .chain(&order[bounds[f + 1]..])
            .map(|&i| points[i])
            .collect();
        let mut fold_err = 0.0;
        for &i in held {
            let est = nw_estimate(&train, points[i].m, points[i].tau, bw)?;
            let e = est.vol - points[i].vol;
            fold_err += e * e;
        }
        total += fold_err / held.len() as f64;
    }
    Ok(total / 5.0)
}

/// Selects kernel bandwidths by 5-fold cross-validation over `candidates`.
/// Ties on CV error are broken toward the smaller `h_m + h_tau`, then the
/// earlier candidate, so the selection is deterministic for a given seed.
///
/// # Errors
/// - `Error::Config` on an empty candidate grid or invalid bandwidths;
/// - `Error::Data` with fewer than 10 points.
pub fn nw_select_bandwidths(
    points: &[SurfacePoint],
    candidates: &[Bandwidths],
    seed: u64,
) -> Result<Bandwidths> {
    if candidates.is_empty() {
        return Err(Error::config("empty bandwidth candidate grid"));
    }
    let mut best: Option<(f64, f64, usize)> = None;
    for (idx, bw) in candidates.iter().enumerate() {
        let cv = nw_cv_error(points, bw, seed)?;
        let key = (cv, bw.h_m + bw.h_tau, idx);
        let better = match &best {
            None => true,
            Some(b) => (key.0, key.1, key.2) < *b,
        };
        if better {
            best = Some(key);
        }
    }
    let (_, _, idx) = best.expect("candidates is nonempty");
    Ok(candidates[idx])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quad_surface(a: [f64; 6]) -> impl Fn(f64, f64) -> f64 {
        move |m, tau| a[0] + a[1] * m + a[2] * tau + a[3] * m * m + a[4] * tau * tau + a[5] * m * tau
    }

    fn sample_grid(f: &dyn Fn(f64, f64) -> f64) -> Vec<SurfacePoint> {
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..5 {
                let m = -0.4 + 0.16 * i as f64;
                let tau = 0.1 + 0.45 * j as f64;
                pts.push(SurfacePoint {
                    m,
                    tau,
                    vol: f(m, tau),
                });
            }
        }
        pts
    }

    #[test]
    fn fit_recovers_exact_quadratic() {
        let a = [0.2, -0.05, 0.03, 0.4, -0.01, 0.02];
        let pts = sample_grid(&quad_surface(a));
        let fit = fit_dfw(&pts).unwrap();
        for k in 0..6 {
            assert!(
                (fit.coeffs.a[k] - a[k]).abs() < 1e-10,
                "coefficient {k}: {} vs {}",
                fit.coeffs.a[k],
                a[k]
            );
        }
        assert!(fit.rmse < 1e-10);
        assert_eq!(fit.n_points, 30);
    }

    #[test]
    fn eval_applies_floor_exactly_where_polynomial_is_below() {
        let c = DfwCoeffs {
            a: [0.02, 0.1, 0.0, 0.0, 0.0, 0.0],
        };
        // Polynomial at m = -0.5 is -0.03 -> floored; at m = 0.5 it is 0.07.
        assert_eq!(eval_dfw(&c, -0.5, 1.0), DFW_FLOOR);
        assert!((eval_dfw(&c, 0.5, 1.0) - 0.07).abs() < 1e-15);
        // Boundary: polynomial exactly at the floor.
        assert_eq!(eval_dfw(&c, -0.1, 1.0), DFW_FLOOR);
    }

    #[test]
    fn derivs_match_polynomial_and_vanish_under_floor() {
        let c = DfwCoeffs {
            a: [0.2, -0.05, 0.03, 0.4, -0.01, 0.02],
        };
        let (m, tau) = (0.3, 0.8);
        let d = dfw_derivs(&c, m, tau);
        assert!((d.vol - eval_dfw(&c, m, tau)).abs() < 1e-15);
        assert!((d.d_m - (-0.05 + 0.8 * m + 0.02 * tau)).abs() < 1e-15);
        assert!((d.d_mm - 0.8).abs() < 1e-15);
        assert!((d.d_tau - (0.03 - 0.02 * tau + 0.02 * m)).abs() < 1e-15);

        let floored = DfwCoeffs {
            a: [-1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        };
        let d = dfw_derivs(&floored, 0.0, 1.0);
        assert_eq!(
            d,
            LocalDerivs {
                vol: DFW_FLOOR,
                d_m: 0.0,
                d_mm: 0.0,
                d_tau: 0.0
            }
        );
    }

    #[test]
    fn fit_rejects_small_or_degenerate_samples() {
        let a = [0.2, -0.05, 0.03, 0.4, -0.01, 0.02];
        let pts = sample_grid(&quad_surface(a));
        assert!(matches!(fit_dfw(&pts[..5]), Err(Error::Fit(_))));
        // All points on one maturity: tau and tau^2 columns are collinear
        // with the intercept.
        let line: Vec<SurfacePoint> = (0..10)
            .map(|i| SurfacePoint {
                m: i as f64 * 0.1,
                tau: 1.0,
                vol: 0.2,
            })
            .collect();
        assert!(matches!(fit_dfw(&line), Err(Error::Fit(_))));
    }

    #[test]
    fn nw_matches_hand_computed_three_point_example() {
        let pts = [
            SurfacePoint {
                m: 0.0,
                tau: 1.0,
                vol: 0.20,
            },
            SurfacePoint {
                m: 0.1,
                tau: 1.0,
                vol: 0.25,
            },
            SurfacePoint {
                m: -0.2,
                tau: 0.5,
                vol: 0.30,
            },
        ];
        let bw = Bandwidths {
            h_m: 5e-3,
            h_tau: 1e-2,
        };
        // Independent arithmetic for the expected value.
        let g = |dm: f64, dt: f64| (-(dm * dm) / 1e-2).exp() * (-(dt * dt) / 2e-2).exp();
        let (q_m, q_t) = (0.02, 0.9);
        let w = [
            g(q_m - 0.0, q_t - 1.0),
            g(q_m - 0.1, q_t - 1.0),
            g(q_m + 0.2, q_t - 0.5),
        ];
        let want = (w[0] * 0.20 + w[1] * 0.25 + w[2] * 0.30) / (w[0] + w[1] + w[2]);
        let est = nw_estimate(&pts, q_m, q_t, &bw).unwrap();
        assert!(!est.fallback);
        assert!((est.vol - want).abs() < 1e-15, "{} vs {want}", est.vol);
    }

    #[test]
    fn nw_falls_back_to_nearest_when_weights_underflow() {
        let pts = [
            SurfacePoint {
                m: 0.0,
                tau: 1.0,
                vol: 0.2,
            },
            SurfacePoint {
                m: 5.0,
                tau: 1.0,
                vol: 0.9,
            },
        ];
        let bw = Bandwidths {
            h_m: 1e-4,
            h_tau: 1e-4,
        };
        // exp(-about 1e6) underflows for every sample.
        let est = nw_estimate(&pts, 60.0, 1.0, &bw).unwrap();
        assert!(est.fallback);
        assert_eq!(est.vol, 0.9);
    }

    #[test]
    fn nw_rejects_bad_inputs() {
        let pts = [SurfacePoint {
            m: 0.0,
            tau: 1.0,
            vol: 0.2,
        }];
        let bad = Bandwidths { h_m: 0.0, h_tau: 1.0 };
        assert!(matches!(
            nw_estimate(&pts, 0.0, 1.0, &bad),
            Err(Error::Config(_))
        ));
        let ok = Bandwidths {
            h_m: 1e-3,
            h_tau: 1e-3,
        };
        assert!(matches!(nw_estimate(&[], 0.0, 1.0, &ok), Err(Error::Data(_))));
    }

    #[test]
    fn cv_selection_is_deterministic_and_prefers_faithful_bandwidths() {
        // Densely sampled noiseless quadratic: a tight kernel tracks the
        // curvature, a very wide one oversmooths it away.
        let a = [0.2, -0.05, 0.03, 0.4, -0.01, 0.02];
        let f = quad_surface(a);
        let mut pts = Vec::new();
        for i in 0..20 {
            for j in 0..10 {
                let m = -0.45 + 0.05 * i as f64;
                let tau = 0.1 + 0.2 * j as f64;
                pts.push(SurfacePoint { m, tau, vol: f(m, tau) });
            }
        }
        let candidates = [
            Bandwidths { h_m: 1e-3, h_tau: 1e-3 },
            Bandwidths { h_m: 5e-2, h_tau: 5e-2 },
        ];
        let sel = nw_select_bandwidths(&pts, &candidates, 7).unwrap();
        assert_eq!(sel, candidates[0]);
        let again = nw_select_bandwidths(&pts, &candidates, 7).unwrap();
        assert_eq!(sel, again, "same seed must select the same bandwidths");

        // The selected candidate attains the minimum CV objective.
        let grid = default_bandwidth_grid();
        let sel = nw_select_bandwidths(&pts, &grid, 11).unwrap();
        let sel_cv = nw_cv_error(&pts, &sel, 11).unwrap();
        for bw in &grid {
            assert!(sel_cv <= nw_cv_error(&pts, bw, 11).unwrap() + 1e-18);
        }
    }

    #[test]
    fn cv_tie_break_prefers_smaller_total_bandwidth_then_order() {
        let a = [0.2, -0.05, 0.03, 0.4, -0.01, 0.02];
        let pts = sample_grid(&quad_surface(a));
        // Duplicated candidate: identical CV error, identical sum -> first wins.
        let dup = [
            Bandwidths { h_m: 1e-3, h_tau: 1e-3 },
            Bandwidths { h_m: 1e-3, h_tau: 1e-3 },
        ];
        assert_eq!(nw_select_bandwidths(&pts, &dup, 3).unwrap(), dup[0]);
        assert!(matches!(
            nw_select_bandwidths(&pts, &[], 3),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            nw_select_bandwidths(&pts[..9], &dup, 3),
            Err(Error::Data(_))
        ));
    }

    proptest! {
        #[test]
        fn nw_estimate_is_a_convex_combination(
            seed in 0u64..1000,
            q_m in -0.6..0.6f64,
            q_tau in 0.05..2.0f64,
            h_m in 1e-4..5e-2f64,
            h_tau in 1e-4..5e-2f64,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let pts: Vec<SurfacePoint> = (0..20)
                .map(|_| SurfacePoint {
                    m: rng.gen::<f64>() - 0.5,
                    tau: 0.05 + 1.95 * rng.gen::<f64>(),
                    vol: 0.1 + 0.4 * rng.gen::<f64>(),
                })
                .collect();
            let lo = pts.iter().map(|p| p.vol).fold(f64::INFINITY, f64::min);
            let hi = pts.iter().map(|p| p.vol).fold(f64::NEG_INFINITY, f64::max);
            let est = nw_estimate(&pts, q_m, q_tau, &Bandwidths { h_m, h_tau }).unwrap();
            prop_assert!(est.vol >= lo - 1e-12 && est.vol <= hi + 1e-12);
        }
    }
}
