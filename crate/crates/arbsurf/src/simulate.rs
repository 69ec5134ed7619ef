//! Monte Carlo simulation of future vol surfaces.
//!
//! The feature predictor gives a point forecast; adding a residual model
//! turns it into a transition equation. With `p` the one-day-ahead
//! prediction and `eps` an i.i.d. mean-zero error vector,
//!
//! ```text
//! Z_{T+1} = p(Z1, Z2, Z3) + eps_{T+1}          (additive)
//! Z_{T+1} = p(Z1, Z2, Z3) .* exp(eps_{T+1})    (multiplicative)
//! ```
//!
//! where the multiplicative form keeps positive features positive (the
//! natural choice for sampled vols; components and latents take the
//! additive form). Residuals are measured on the training series, and the
//! error distribution is either a mean-zero Gaussian with the residuals'
//! second-moment matrix or a bootstrap over the stored residual rows.
//!
//! Each simulated step decodes the new feature vector to a conditioning
//! vol set and evaluates the penalty-trained surface network on the output
//! grid, so every simulated surface inherits the network's freedom from
//! static arbitrage. Multi-step paths roll simulated features into the
//! 22/5-day input windows. Paths draw from per-path ChaCha streams of one
//! seed, so ensembles are reproducible and paths are independent.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::constructor::{surface_eval_grid, SurfaceNet};
use crate::dataset::{FixedGrid, GriddedSurface, NaiveDate};
use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureModel, FeatureSeries};
use crate::linalg::spectral_sqrt;
use crate::math::std_normal;
use crate::nn::{matmul_tn, Tensor};
use crate::predictor::{
    build_inputs, predict_from_inputs, predict_next, PredictorModel, LONG_WINDOW,
};

/// Fewest residual observations accepted when fitting an error model.
pub const MIN_RESIDUALS: usize = 30;

/// How a drawn error enters the feature transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorMode {
    /// `Z_{T+1} = p + eps`.
    Additive,
    /// `Z_{T+1} = p .* exp(eps)`; requires positive features.
    Multiplicative,
}

/// The conventional mode for each feature kind: multiplicative where
/// features must stay positive (sampled vols), additive otherwise.
pub fn default_mode(kind: FeatureKind) -> ErrorMode {
    match kind {
        FeatureKind::Sam => ErrorMode::Multiplicative,
        FeatureKind::Pca | FeatureKind::Vae => ErrorMode::Additive,
    }
}

/// Which error distribution a fit should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    Gaussian,
    Bootstrap,
}

/// The fitted error distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum ErrorDistribution {
    /// Mean-zero Gaussian. `cov` is the residual second-moment matrix and
    /// `factor` a spectral square root `L` with `L L^T = cov` (negative
    /// eigenvalues from numerical rank deficiency clamped to zero).
    Gaussian { cov: Tensor, factor: Tensor },
    /// Uniform resampling of whole residual rows.
    Bootstrap,
}

/// A fitted residual model: the transition mode, the error distribution,
/// and the residual sample it was estimated from (one row per day).
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorModel {
    pub mode: ErrorMode,
    pub distribution: ErrorDistribution,
    pub residuals: Tensor,
}

impl ErrorModel {
    /// Feature dimension the model draws errors for.
    pub fn dim(&self) -> usize {
        self.residuals.cols
    }

    /// A degenerate model whose draws are exactly zero, making simulation
    /// reproduce the deterministic prediction.
    pub fn zero(mode: ErrorMode, dim: usize) -> Self {
        ErrorModel {
            mode,
            distribution: ErrorDistribution::Gaussian {
                cov: Tensor::zeros(dim, dim),
                factor: Tensor::zeros(dim, dim),
            },
            residuals: Tensor::zeros(1, dim),
        }
    }

    /// # Errors
    /// `Error::Data` for an empty bootstrap sample, non-finite entries, or
    /// an asymmetric Gaussian matrix; `Error::Shape` for mismatched
    /// dimensions.
    pub fn validate(&self) -> Result<()> {
        let dim = self.dim();
        if dim == 0 {
            return Err(Error::shape("error model of dimension zero"));
        }
        if self.residuals.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("residual sample has non-finite entries"));
        }
        match &self.distribution {
            ErrorDistribution::Gaussian { cov, factor } => {
                if cov.rows != dim || cov.cols != dim || factor.rows != dim || factor.cols != dim {
                    return Err(Error::shape(format!(
                        "Gaussian matrices are {}x{} and {}x{} for dimension {dim}",
                        cov.rows, cov.cols, factor.rows, factor.cols
                    )));
                }
                if cov.values.iter().any(|v| !v.is_finite())
                    || factor.values.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::data("Gaussian matrices have non-finite entries"));
                }
                let scale = cov.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                for i in 0..dim {
                    for j in i + 1..dim {
                        if (cov.get(i, j) - cov.get(j, i)).abs() > 1e-9 * scale.max(1e-300) {
                            return Err(Error::data(format!(
                                "error covariance not symmetric at ({i}, {j})"
                            )));
                        }
                    }
                }
            }
            ErrorDistribution::Bootstrap => {
                if self.residuals.rows == 0 {
                    return Err(Error::data("bootstrap error model with no residual rows"));
                }
            }
        }
        Ok(())
    }

    /// Draws one error vector.
    ///
    /// # Errors
    /// `Error::Data` if a bootstrap model has no residual rows.
    pub fn draw<R: RngCore + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let dim = self.dim();
        match &self.distribution {
            ErrorDistribution::Gaussian { factor, .. } => {
                let z: Vec<f64> = (0..dim).map(|_| std_normal(rng)).collect();
                let mut eps = alloc::vec![0.0; dim];
                for (i, e) in eps.iter_mut().enumerate() {
                    let row = &factor.values[i * dim..(i + 1) * dim];
                    *e = row.iter().zip(&z).map(|(&l, &v)| l * v).sum();
                }
                Ok(eps)
            }
            ErrorDistribution::Bootstrap => {
                if self.residuals.rows == 0 {
                    return Err(Error::data("bootstrap error model with no residual rows"));
                }
                let row = rng.gen_range(0..self.residuals.rows);
                Ok(self.residuals.values[row * dim..(row + 1) * dim].to_vec())
            }
        }
    }
}

/// Fits a residual model for a trained predictor on its feature series.
///
/// One-day-ahead predictions are made for every day with a full input
/// window and compared against the realized features; the residual is the
/// difference (additive) or the log-ratio (multiplicative). A Gaussian fit
/// stores the second-moment matrix of the residuals about zero — the
/// errors are modeled as mean-zero, so the sample mean is part of the
/// noise — along with its sampling factor; a bootstrap fit keeps only the
/// rows.
///
/// # Errors
/// - `Error::Data` if fewer than [`MIN_RESIDUALS`] residuals are available;
/// - `Error::Mode` in multiplicative mode when a realized feature or a
///   prediction is not strictly positive;
/// - propagated prediction errors (kind or dimension mismatches).
pub fn fit_error_model(
    series: &FeatureSeries,
    predictor: &PredictorModel,
    mode: ErrorMode,
    noise: NoiseKind,
) -> Result<ErrorModel> {
    series.validate()?;
    let dim = series.dim;
    // One residual per day with a full window and a realized next day:
    // targets LONG_WINDOW .. len-1 inclusive.
    let n = series.len().saturating_sub(LONG_WINDOW);
    if n < MIN_RESIDUALS {
        return Err(Error::data(format!(
            "{n} residual observations from a series of {} days; need {MIN_RESIDUALS}",
            series.len()
        )));
    }
    let mut values = Vec::with_capacity(n * dim);
    for t in LONG_WINDOW - 1..series.len() - 1 {
        let p = predict_next(predictor, series, t)?;
        for (i, (&realized, &predicted)) in series.z[t + 1].iter().zip(&p).enumerate() {
            match mode {
                ErrorMode::Additive => values.push(realized - predicted),
                ErrorMode::Multiplicative => {
                    if !(realized > 0.0) || !(predicted > 0.0) {
                        return Err(Error::mode(format!(
                            "multiplicative errors need positive features; coordinate {i} on day {} \
                             has realized {realized}, predicted {predicted}",
                            t + 1
                        )));
                    }
                    values.push((realized / predicted).ln());
                }
            }
        }
    }
    let residuals = Tensor {
        rows: n,
        cols: dim,
        values,
    };
    let distribution = match noise {
        NoiseKind::Bootstrap => ErrorDistribution::Bootstrap,
        NoiseKind::Gaussian => {
            let mut cov = matmul_tn(&residuals, &residuals)?;
            for v in &mut cov.values {
                *v /= n as f64;
            }
            let factor = Tensor {
                rows: dim,
                cols: dim,
                values: spectral_sqrt(&cov.values, dim)?,
            };
            ErrorDistribution::Gaussian { cov, factor }
        }
    };
    let model = ErrorModel {
        mode,
        distribution,
        residuals,
    };
    model.validate()?;
    Ok(model)
}

/// The trained pieces a simulation composes: feature predictor, feature
/// decoder, surface network, and residual model.
#[derive(Debug, Clone, Copy)]
pub struct SimulationModels<'a> {
    pub predictor: &'a PredictorModel,
    pub decoder: &'a FeatureModel,
    pub surface: &'a SurfaceNet,
    pub error: &'a ErrorModel,
}

/// One simulated future: per step, the feature vector and the surface it
/// decodes to, step 0 being one day past the end of the history.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub features: Vec<Vec<f64>>,
    pub surfaces: Vec<GriddedSurface>,
}

/// Simulates an ensemble of feature paths and their surfaces.
///
/// Each path starts from the trailing input window of `history` and rolls
/// forward `horizon` business steps: predict one day ahead, draw an error,
/// apply the transition in the residual model's mode, decode the new
/// features to a conditioning vol set, and evaluate the surface network on
/// `grid`. Simulated surfaces are dated one calendar day per step past
/// `start`. Path `k` uses stream `k` of the seed's ChaCha generator, so
/// the ensemble is deterministic per seed and paths are independent.
///
/// # Errors
/// - `Error::Config` for a zero horizon or path count;
/// - `Error::Data` for histories shorter than the input window;
/// - `Error::Shape`/`Error::Mode` for inconsistent model dimensions or
///   feature kinds;
/// - `Error::Diverged` if a simulated feature vector is non-finite.
#[allow(clippy::too_many_arguments)]
pub fn simulate_paths(
    models: &SimulationModels,
    history: &FeatureSeries,
    grid: &FixedGrid,
    start: NaiveDate,
    horizon: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<SimulatedPath>> {
    if horizon == 0 {
        return Err(Error::config("simulation horizon must be at least 1"));
    }
    if n_paths == 0 {
        return Err(Error::config("path count must be at least 1"));
    }
    grid.validate()?;
    history.validate()?;
    models.error.validate()?;
    if history.len() < LONG_WINDOW {
        return Err(Error::data(format!(
            "history of {} days cannot fill a {LONG_WINDOW}-day input window",
            history.len()
        )));
    }
    if models.decoder.kind() != history.kind {
        return Err(Error::mode(format!(
            "{} history fed to a {} decoder",
            history.kind.tag(),
            models.decoder.kind().tag()
        )));
    }
    if models.decoder.dim() != history.dim {
        return Err(Error::shape(format!(
            "decoder expects {}-dimensional features, history has {}",
            models.decoder.dim(),
            history.dim
        )));
    }
    if models.error.dim() != history.dim {
        return Err(Error::shape(format!(
            "error model of dimension {} against {}-dimensional features",
            models.error.dim(),
            history.dim
        )));
    }
    if models.surface.feature_dim() != models.decoder.grid_size() {
        return Err(Error::shape(format!(
            "surface network conditions on {} vols, decoder produces {}",
            models.surface.feature_dim(),
            models.decoder.grid_size()
        )));
    }
    // Base date for step dates; checked once so per-step construction
    // cannot fail.
    let base = chrono::Datelike::num_days_from_ce(&start);
    NaiveDate::from_num_days_from_ce_opt(base + horizon as i32)
        .ok_or_else(|| Error::data("horizon dates overflow the calendar"))?;

    let mut paths = Vec::with_capacity(n_paths);
    for path in 0..n_paths {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(path as u64);
        // Only the trailing input window feeds the recurrence; carry just
        // that and roll simulated features through it.
        let mut window = FeatureSeries {
            kind: history.kind,
            dim: history.dim,
            z: history.z[history.len() - LONG_WINDOW..].to_vec(),
        };
        let mut features = Vec::with_capacity(horizon);
        let mut surfaces = Vec::with_capacity(horizon);
        for step in 0..horizon {
            let inputs = build_inputs(&window, window.len() - 1)?;
            let p = predict_from_inputs(models.predictor, &inputs)?;
            let eps = models.error.draw(&mut rng)?;
            let z: Vec<f64> = match models.error.mode {
                ErrorMode::Additive => p.iter().zip(&eps).map(|(&a, &e)| a + e).collect(),
                ErrorMode::Multiplicative => {
                    p.iter().zip(&eps).map(|(&a, &e)| a * e.exp()).collect()
                }
            };
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!(
                    "non-finite simulated features at path {path}, step {step}"
                )));
            }
            let conditioning = models.decoder.decode(&z)?;
            let vols = surface_eval_grid(models.surface, grid, &conditioning)?;
            let date = NaiveDate::from_num_days_from_ce_opt(base + 1 + step as i32)
                .ok_or_else(|| Error::data("horizon dates overflow the calendar"))?;
            surfaces.push(GriddedSurface { date, vols });
            features.push(z.clone());
            window.z.push(z);
            window.z.remove(0);
        }
        paths.push(SimulatedPath { features, surfaces });
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructor::{
        build_penalty_grids, surface_derivs, train_constructor, ConstructorConfig, ConstructorDay,
        PenaltyGridConfig,
    };
    use crate::nn::{ActKind, TrainConfig};
    use crate::predictor::{IoTransform, LstmParams};
    use crate::surface::{ell_but, ell_cal, SurfacePoint};
    use alloc::vec;
    use alloc::vec::Vec;
    use chrono::Datelike;

    /// A predictor whose output is exactly `c` for any input: the output
    /// head has zero weights and bias `c`, behind an identity scaling.
    fn constant_predictor(kind: FeatureKind, c: &[f64]) -> PredictorModel {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let mut params = LstmParams::new(c.len(), 3, ActKind::Identity, &mut rng);
        params.head.w.values.fill(0.0);
        params.head.b.values.copy_from_slice(c);
        PredictorModel {
            kind,
            params,
            io: IoTransform::Standardize {
                mean: vec![0.0; c.len()],
                std: vec![1.0; c.len()],
            },
        }
    }

    /// A randomly initialized predictor (prediction depends on its inputs).
    fn random_predictor(kind: FeatureKind, dim: usize, seed: u64) -> PredictorModel {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        PredictorModel {
            kind,
            params: LstmParams::new(dim, 4, ActKind::Identity, &mut rng),
            io: IoTransform::Standardize {
                mean: vec![0.0; dim],
                std: vec![1.0; dim],
            },
        }
    }

    /// Positive, gently varying features suitable for a sampled-vol series.
    fn sam_series(dim: usize, len: usize, seed: u64) -> FeatureSeries {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let z = (0..len)
            .map(|t| {
                (0..dim)
                    .map(|i| {
                        0.2 + 0.02 * i as f64
                            + 0.01 * (0.3 * t as f64).sin()
                            + 0.002 * std_normal(&mut rng)
                    })
                    .collect()
            })
            .collect();
        FeatureSeries {
            kind: FeatureKind::Sam,
            dim,
            z,
        }
    }

    /// A hand-built diagonal Gaussian error model.
    fn gaussian_diag(mode: ErrorMode, sds: &[f64]) -> ErrorModel {
        let dim = sds.len();
        let mut cov = Tensor::zeros(dim, dim);
        let mut factor = Tensor::zeros(dim, dim);
        for (i, &s) in sds.iter().enumerate() {
            cov.set(i, i, s * s);
            factor.set(i, i, s);
        }
        ErrorModel {
            mode,
            distribution: ErrorDistribution::Gaussian { cov, factor },
            residuals: Tensor::zeros(1, dim),
        }
    }

    fn start_date() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 4).unwrap()
    }

    fn tiny_grid() -> FixedGrid {
        FixedGrid {
            m: vec![-0.3, 0.0, 0.3],
            tau: vec![0.2, 0.7],
        }
    }

    /// 99th percentile of the chi-squared distribution with 19 degrees of
    /// freedom; a frequency statistic below this passes the uniformity
    /// test at the 1% level.
    const CHI2_99_DF19: f64 = 36.1908691293;

    #[test]
    fn perfect_predictions_leave_zero_covariance() {
        // A constant series predicted exactly: every residual is zero, so
        // the second-moment matrix, its factor, and every draw are zero.
        let c = [0.2, 0.3];
        let series = FeatureSeries {
            kind: FeatureKind::Sam,
            dim: 2,
            z: vec![c.to_vec(); 60],
        };
        let predictor = constant_predictor(FeatureKind::Sam, &c);
        let model =
            fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Gaussian)
                .unwrap();
        assert_eq!(model.residuals.rows, 60 - LONG_WINDOW);
        assert!(model.residuals.values.iter().all(|&v| v == 0.0));
        match &model.distribution {
            ErrorDistribution::Gaussian { cov, factor } => {
                assert!(cov.values.iter().all(|&v| v == 0.0));
                assert!(factor.values.iter().all(|&v| v == 0.0));
            }
            ErrorDistribution::Bootstrap => panic!("asked for a Gaussian fit"),
        }
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(model.draw(&mut rng).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn known_diagonal_covariance_is_recovered_within_sampling_error() {
        // Features are a constant plus independent Gaussian noise with a
        // known diagonal covariance, and the predictor returns the
        // constant, so the residuals ARE the noise. The estimate must sit
        // within standard-error bounds of the generating covariance:
        // se(var_ii) = D_ii sqrt(2/n), se(cov_ij) = sqrt(D_ii D_jj / n).
        let c = [0.5, -0.2, 0.8];
        let sds = [0.05, 0.10, 0.15];
        let len = 322;
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let z: Vec<Vec<f64>> = (0..len)
            .map(|_| {
                c.iter()
                    .zip(&sds)
                    .map(|(&ci, &si)| ci + si * std_normal(&mut rng))
                    .collect()
            })
            .collect();
        let series = FeatureSeries {
            kind: FeatureKind::Pca,
            dim: 3,
            z,
        };
        let predictor = constant_predictor(FeatureKind::Pca, &c);
        let model =
            fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Gaussian)
                .unwrap();
        let n = (len - LONG_WINDOW) as f64;
        assert_eq!(model.residuals.rows as f64, n);
        let cov = match &model.distribution {
            ErrorDistribution::Gaussian { cov, .. } => cov,
            ErrorDistribution::Bootstrap => panic!("asked for a Gaussian fit"),
        };
        for i in 0..3 {
            let d = sds[i] * sds[i];
            let se = d * (2.0 / n).sqrt();
            assert!(
                (cov.get(i, i) - d).abs() < 4.0 * se,
                "variance {i}: {} vs {d} (se {se})",
                cov.get(i, i)
            );
            for j in i + 1..3 {
                let se = (sds[i] * sds[i] * sds[j] * sds[j] / n).sqrt();
                assert!(
                    cov.get(i, j).abs() < 4.0 * se,
                    "covariance ({i},{j}): {} (se {se})",
                    cov.get(i, j)
                );
            }
        }
    }

    #[test]
    fn fits_store_the_residual_sample() {
        // Both distributions keep the raw residual rows; the Gaussian also
        // stores the second-moment matrix about zero of exactly those rows.
        let c = [0.3, 0.4];
        let series = sam_series(2, 64, 9);
        let predictor = constant_predictor(FeatureKind::Sam, &c);

        let expected: Vec<f64> = (LONG_WINDOW - 1..series.len() - 1)
            .flat_map(|t| {
                series.z[t + 1]
                    .iter()
                    .zip(&c)
                    .map(|(&z, &p)| z - p)
                    .collect::<Vec<_>>()
            })
            .collect();

        let boot =
            fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Bootstrap)
                .unwrap();
        assert_eq!(boot.distribution, ErrorDistribution::Bootstrap);
        assert_eq!(boot.residuals.values, expected);

        let gauss =
            fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Gaussian)
                .unwrap();
        assert_eq!(gauss.residuals.values, expected);
        let n = gauss.residuals.rows;
        let cov = match &gauss.distribution {
            ErrorDistribution::Gaussian { cov, .. } => cov,
            ErrorDistribution::Bootstrap => panic!("asked for a Gaussian fit"),
        };
        for i in 0..2 {
            for j in 0..2 {
                let mut s = 0.0;
                for t in 0..n {
                    s += expected[t * 2 + i] * expected[t * 2 + j];
                }
                assert!((cov.get(i, j) - s / n as f64).abs() < 1e-15);
            }
        }
        // Multiplicative residuals are the log-ratios of the same pairs.
        let mul = fit_error_model(
            &series,
            &predictor,
            ErrorMode::Multiplicative,
            NoiseKind::Bootstrap,
        )
        .unwrap();
        let logs: Vec<f64> = (LONG_WINDOW - 1..series.len() - 1)
            .flat_map(|t| {
                series.z[t + 1]
                    .iter()
                    .zip(&c)
                    .map(|(&z, &p)| (z / p).ln())
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(mul.residuals.values, logs);
    }

    #[test]
    fn multiplicative_mode_requires_positive_features() {
        // Component features are sign-indefinite, so the log-ratio is
        // undefined: the fit must refuse rather than produce NaNs.
        let c = [0.5, -0.2];
        let series = FeatureSeries {
            kind: FeatureKind::Pca,
            dim: 2,
            z: vec![c.to_vec(); 60],
        };
        let predictor = constant_predictor(FeatureKind::Pca, &c);
        assert!(matches!(
            fit_error_model(
                &series,
                &predictor,
                ErrorMode::Multiplicative,
                NoiseKind::Gaussian
            ),
            Err(Error::Mode(_))
        ));
        // The same data fits fine additively.
        fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Gaussian).unwrap();
    }

    #[test]
    fn too_few_residuals_are_rejected() {
        let series = sam_series(2, MIN_RESIDUALS + LONG_WINDOW - 1, 3);
        let predictor = constant_predictor(FeatureKind::Sam, &[0.2, 0.22]);
        assert!(matches!(
            fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Gaussian),
            Err(Error::Data(_))
        ));
        let series = sam_series(2, MIN_RESIDUALS + LONG_WINDOW, 3);
        fit_error_model(&series, &predictor, ErrorMode::Additive, NoiseKind::Gaussian).unwrap();
    }

    #[test]
    fn default_modes_follow_feature_positivity() {
        assert_eq!(default_mode(FeatureKind::Sam), ErrorMode::Multiplicative);
        assert_eq!(default_mode(FeatureKind::Pca), ErrorMode::Additive);
        assert_eq!(default_mode(FeatureKind::Vae), ErrorMode::Additive);
    }

    #[test]
    fn zero_noise_paths_reproduce_the_deterministic_prediction() {
        // With a zero error model every path must equal the rolled
        // prediction chain bit for bit, in both transition modes
        // (p + 0 = p and p * exp(0) = p).
        let dim = 2;
        let history = sam_series(dim, 30, 17);
        let predictor = random_predictor(FeatureKind::Sam, dim, 23);
        let decoder = FeatureModel::Sam { grid_size: dim };
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let surface = SurfaceNet::new(dim, 4, &mut rng).unwrap();
        let grid = tiny_grid();

        // The expected chain: predict, append, repeat.
        let mut rolled = history.clone();
        let mut expected = Vec::new();
        for _ in 0..3 {
            let p = predict_next(&predictor, &rolled, rolled.len() - 1).unwrap();
            expected.push(p.clone());
            rolled.z.push(p);
        }

        for mode in [ErrorMode::Additive, ErrorMode::Multiplicative] {
            let error = ErrorModel::zero(mode, dim);
            let models = SimulationModels {
                predictor: &predictor,
                decoder: &decoder,
                surface: &surface,
                error: &error,
            };
            let paths =
                simulate_paths(&models, &history, &grid, start_date(), 3, 4, 99).unwrap();
            assert_eq!(paths.len(), 4);
            for path in &paths {
                assert_eq!(path.features, expected);
                for (step, s) in path.surfaces.iter().enumerate() {
                    let f = decoder.decode(&expected[step]).unwrap();
                    assert_eq!(s.vols, surface_eval_grid(&surface, &grid, &f).unwrap());
                    assert_eq!(
                        s.date.num_days_from_ce(),
                        start_date().num_days_from_ce() + 1 + step as i32
                    );
                }
            }
        }
    }

    #[test]
    fn same_seed_reproduces_the_ensemble() {
        let dim = 2;
        let history = sam_series(dim, 40, 71);
        let predictor = constant_predictor(FeatureKind::Sam, &[0.2, 0.25]);
        let decoder = FeatureModel::Sam { grid_size: dim };
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let surface = SurfaceNet::new(dim, 4, &mut rng).unwrap();
        let error = gaussian_diag(ErrorMode::Additive, &[0.01, 0.02]);
        let models = SimulationModels {
            predictor: &predictor,
            decoder: &decoder,
            surface: &surface,
            error: &error,
        };
        let grid = tiny_grid();
        let a = simulate_paths(&models, &history, &grid, start_date(), 2, 3, 7).unwrap();
        let b = simulate_paths(&models, &history, &grid, start_date(), 2, 3, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_paths(&models, &history, &grid, start_date(), 2, 3, 8).unwrap();
        assert_ne!(a, c);
        // Paths within an ensemble are distinct draws.
        assert_ne!(a[0].features, a[1].features);
    }

    #[test]
    fn bootstrap_draws_are_uniform_over_rows() {
        // 10^4 draws over 20 distinct rows: the index frequencies must
        // pass a chi-squared uniformity test at the 1% level.
        let rows = 20;
        let model = ErrorModel {
            mode: ErrorMode::Additive,
            distribution: ErrorDistribution::Bootstrap,
            residuals: Tensor {
                rows,
                cols: 1,
                values: (0..rows).map(|i| i as f64).collect(),
            },
        };
        let mut rng = ChaCha12Rng::seed_from_u64(12);
        let mut counts = vec![0usize; rows];
        let draws = 10_000;
        for _ in 0..draws {
            let e = model.draw(&mut rng).unwrap();
            counts[e[0] as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "all rows drawn");
        let expect = draws as f64 / rows as f64;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expect;
                d * d / expect
            })
            .sum();
        assert!(
            stat < CHI2_99_DF19,
            "chi-squared stat {stat} exceeds the 1% critical value"
        );
    }

    #[test]
    fn ensemble_mean_converges_to_the_prediction() {
        // Additive Gaussian noise is mean zero, so the horizon-1 ensemble
        // mean estimates the deterministic prediction with standard error
        // sd/sqrt(n); the observed means must sit within five of those.
        let dim = 3;
        let c = [0.2, 0.25, 0.3];
        let sd = 0.01;
        let history = sam_series(dim, 25, 13);
        let predictor = constant_predictor(FeatureKind::Sam, &c);
        let decoder = FeatureModel::Sam { grid_size: dim };
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let surface = SurfaceNet::new(dim, 4, &mut rng).unwrap();
        let error = gaussian_diag(ErrorMode::Additive, &[sd; 3]);
        let models = SimulationModels {
            predictor: &predictor,
            decoder: &decoder,
            surface: &surface,
            error: &error,
        };
        let grid = FixedGrid {
            m: vec![0.0],
            tau: vec![0.5],
        };
        let n_paths = 2000;
        let paths =
            simulate_paths(&models, &history, &grid, start_date(), 1, n_paths, 77).unwrap();
        let mut mean = vec![0.0; dim];
        for path in &paths {
            for (m, &v) in mean.iter_mut().zip(&path.features[0]) {
                *m += v;
            }
        }
        let se = sd / (n_paths as f64).sqrt();
        for (i, m) in mean.iter_mut().enumerate() {
            *m /= n_paths as f64;
            assert!(
                (*m - c[i]).abs() < 5.0 * se,
                "coordinate {i}: mean {m} vs {} (se {se})",
                c[i]
            );
        }
    }

    #[test]
    fn simulated_surfaces_pass_the_arbitrage_scan() {
        // Surfaces come from a penalty-trained network, so every simulated
        // surface must clear the calendar and butterfly diagnostics on the
        // probe grid it was trained against, whatever features the noise
        // produces.
        let dim = 6;
        let mut days = Vec::new();
        for i in 0..4 {
            let level = 0.2 + 0.01 * i as f64;
            let quotes = (0..12)
                .map(|q| SurfacePoint {
                    m: -0.5 + 0.1 * q as f64,
                    tau: 0.15 + 0.2 * (q % 4) as f64,
                    vol: level,
                })
                .collect();
            days.push(ConstructorDay {
                f: vec![level; dim],
                quotes,
            });
        }
        let grid_config = PenaltyGridConfig {
            m_nodes: 5,
            tau_nodes: 5,
            ..PenaltyGridConfig::default()
        };
        let config = ConstructorConfig {
            train: TrainConfig::new(30, 24, 0.003, 5),
            hidden: 6,
            lambda: 1.0,
            grid: grid_config.clone(),
            ..ConstructorConfig::default()
        };
        let (surface, _) = train_constructor(&days, &[], &config).unwrap();

        let history = sam_series(dim, 26, 41);
        let predictor = constant_predictor(FeatureKind::Sam, &[0.2; 6]);
        let decoder = FeatureModel::Sam { grid_size: dim };
        let error = gaussian_diag(ErrorMode::Multiplicative, &[0.05; 6]);
        let models = SimulationModels {
            predictor: &predictor,
            decoder: &decoder,
            surface: &surface,
            error: &error,
        };
        let paths =
            simulate_paths(&models, &history, &tiny_grid(), start_date(), 2, 3, 21).unwrap();

        let probe = build_penalty_grids(&grid_config).unwrap();
        for path in &paths {
            for z in &path.features {
                let f = decoder.decode(z).unwrap();
                for &(m, tau) in &probe.c34 {
                    let d = surface_derivs(&surface, m, tau, &f).unwrap();
                    assert!(
                        ell_cal(&d, tau) >= -1e-8,
                        "calendar violation at ({m}, {tau})"
                    );
                    assert!(
                        ell_but(&d, m, tau).unwrap() >= -1e-8,
                        "butterfly violation at ({m}, {tau})"
                    );
                }
            }
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let dim = 2;
        let history = sam_series(dim, 30, 3);
        let predictor = constant_predictor(FeatureKind::Sam, &[0.2, 0.25]);
        let decoder = FeatureModel::Sam { grid_size: dim };
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let surface = SurfaceNet::new(dim, 3, &mut rng).unwrap();
        let error = ErrorModel::zero(ErrorMode::Additive, dim);
        let models = SimulationModels {
            predictor: &predictor,
            decoder: &decoder,
            surface: &surface,
            error: &error,
        };
        let grid = tiny_grid();
        let ok = |h: &FeatureSeries, m: &SimulationModels, hor: usize, np: usize| {
            simulate_paths(m, h, &grid, start_date(), hor, np, 1)
        };

        assert!(matches!(
            ok(&history, &models, 0, 1),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ok(&history, &models, 1, 0),
            Err(Error::Config(_))
        ));

        let short = FeatureSeries {
            z: history.z[..LONG_WINDOW - 1].to_vec(),
            ..history.clone()
        };
        assert!(matches!(ok(&short, &models, 1, 1), Err(Error::Data(_))));

        // Kind mismatch between history and decoder.
        let pca_history = FeatureSeries {
            kind: FeatureKind::Pca,
            ..history.clone()
        };
        assert!(matches!(
            ok(&pca_history, &models, 1, 1),
            Err(Error::Mode(_))
        ));

        // Error model of the wrong dimension.
        let wide_error = ErrorModel::zero(ErrorMode::Additive, dim + 1);
        let bad = SimulationModels {
            error: &wide_error,
            ..models
        };
        assert!(matches!(ok(&history, &bad, 1, 1), Err(Error::Shape(_))));

        // Surface conditioned on a different vol-set size than the
        // decoder produces.
        let wide_surface = SurfaceNet::new(dim + 1, 3, &mut rng).unwrap();
        let bad = SimulationModels {
            surface: &wide_surface,
            ..models
        };
        assert!(matches!(ok(&history, &bad, 1, 1), Err(Error::Shape(_))));

        // An empty bootstrap sample fails validation.
        let empty = ErrorModel {
            mode: ErrorMode::Additive,
            distribution: ErrorDistribution::Bootstrap,
            residuals: Tensor {
                rows: 0,
                cols: dim,
                values: Vec::new(),
            },
        };
        assert!(matches!(empty.validate(), Err(Error::Data(_))));
        let bad = SimulationModels {
            error: &empty,
            ..models
        };
        assert!(matches!(ok(&history, &bad, 1, 1), Err(Error::Data(_))));
    }
}
