//! Out-of-sample backtesting and forecast comparison.
//!
//! The rolling harness predicts every test day from the information
//! available the day before: build the feature predictor's inputs ending
//! at day `t-1`, predict the day-`t` feature vector, decode it to a
//! conditioning vol set, and evaluate a second-stage surface at the day's
//! *observed* quote coordinates (which differ from the sampling grid).
//! Second stages are the penalty-trained network, the quadratic
//! polynomial fitted to the decoded grid vols, or — as a classical
//! benchmark — the previous day's quadratic fit carried forward
//! unchanged.
//!
//! Runs are scored by pooled RMSE and MAPE over every (day, point) pair,
//! compared pairwise with a one-sided Diebold-Mariano test on daily mean
//! squared errors (heteroskedasticity- and autocorrelation-consistent
//! variance, Bartlett kernel, lag `floor(T^(1/3))`), and scanned for
//! static-arbitrage violations by averaging the negative parts of the
//! calendar and butterfly diagnostics at the observed points.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::constructor::{surface_derivs, SurfaceNet};
use crate::dataset::{NaiveDate, PanelSplit};
use crate::error::{Error, Result};
use crate::features::{extract_series, FeatureModel};
use crate::interp::{dfw_derivs, fit_dfw};
use crate::math::norm_cdf;
use crate::predictor::{predict_next, PredictorModel, LONG_WINDOW};
use crate::surface::{ell_but, ell_cal, LocalDerivs, SurfacePoint};

/// One test day of a backtest: observed coordinates with ground-truth
/// vols, the model's vols at the same points, and the evaluator's local
/// derivatives there (used by the violation scan).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDay {
    pub date: NaiveDate,
    pub truth: Vec<SurfacePoint>,
    pub predicted: Vec<f64>,
    pub derivs: Vec<LocalDerivs>,
}

/// A model's predictions over the whole test period.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRun {
    /// Short model tag, e.g. `sam-dnn` or `dfw`.
    pub model: String,
    pub days: Vec<PredictionDay>,
}

impl PredictionRun {
    /// Number of (day, point) pairs in the run.
    pub fn n_points(&self) -> usize {
        self.days.iter().map(|d| d.truth.len()).sum()
    }

    /// # Errors
    /// `Error::Data` for an empty run or empty day; `Error::Shape` when a
    /// day's predictions are not aligned one-to-one with its truths.
    pub fn validate(&self) -> Result<()> {
        if self.days.is_empty() {
            return Err(Error::data(format!("run {} has no days", self.model)));
        }
        for day in &self.days {
            if day.truth.is_empty() {
                return Err(Error::data(format!(
                    "run {}: day {} has no points",
                    self.model, day.date
                )));
            }
            if day.predicted.len() != day.truth.len() || day.derivs.len() != day.truth.len() {
                return Err(Error::shape(format!(
                    "run {}: day {} has {} truths, {} predictions, {} derivative records",
                    self.model,
                    day.date,
                    day.truth.len(),
                    day.predicted.len(),
                    day.derivs.len()
                )));
            }
        }
        Ok(())
    }
}

/// Second-stage surface used on each predicted conditioning vol set.
#[derive(Debug, Clone, Copy)]
pub enum StepTwo<'a> {
    /// The penalty-trained network, evaluated directly.
    Network(&'a SurfaceNet),
    /// The quadratic polynomial, least-squares fitted to the decoded vols
    /// on the sampling grid each day.
    Quadratic,
}

/// A backtestable model: a predicted two-stage pipeline, or the classical
/// carry-forward benchmark.
#[derive(Debug, Clone, Copy)]
pub enum BacktestModel<'a> {
    /// Predict features one day ahead, decode, then interpolate with the
    /// second stage.
    TwoStep {
        predictor: &'a PredictorModel,
        decoder: &'a FeatureModel,
        step2: StepTwo<'a>,
    },
    /// Forecast each day with the quadratic polynomial fitted to the
    /// previous day's observed quotes.
    QuadraticCarry,
}

impl BacktestModel<'_> {
    /// Stable lower-case tag naming the pipeline in reports.
    pub fn tag(&self) -> String {
        match self {
            BacktestModel::TwoStep {
                decoder,
                step2: StepTwo::Network(_),
                ..
            } => format!("{}-dnn", decoder.kind().tag()),
            BacktestModel::TwoStep {
                decoder,
                step2: StepTwo::Quadratic,
                ..
            } => format!("{}-dfw", decoder.kind().tag()),
            BacktestModel::QuadraticCarry => String::from("dfw"),
        }
    }
}

/// Runs the rolling out-of-sample harness for one model over a panel
/// split, producing predictions (and evaluator derivatives) at every test
/// day's observed points.
///
/// # Errors
/// - `Error::Data` for an empty test period, or a training period too
///   short for the predictor's input window (two-stage models) or empty
///   (carry benchmark);
/// - `Error::Shape` when the decoder, grid, and surface dimensions
///   disagree;
/// - propagated prediction, decoding, and fitting errors.
pub fn run_backtest(split: &PanelSplit, model: &BacktestModel) -> Result<PredictionRun> {
    if split.test.is_empty() {
        return Err(Error::data("backtest needs at least one test day"));
    }
    let tag = model.tag();
    let mut days = Vec::with_capacity(split.test.len());
    match model {
        BacktestModel::TwoStep {
            predictor,
            decoder,
            step2,
        } => {
            if split.train.len() < LONG_WINDOW {
                return Err(Error::data(format!(
                    "{} training days cannot fill the {LONG_WINDOW}-day input window",
                    split.train.len()
                )));
            }
            if decoder.grid_size() != split.grid.size() {
                return Err(Error::shape(format!(
                    "decoder produces {} vols, grid has {} nodes",
                    decoder.grid_size(),
                    split.grid.size()
                )));
            }
            if let StepTwo::Network(net) = step2 {
                if net.feature_dim() != decoder.grid_size() {
                    return Err(Error::shape(format!(
                        "surface network conditions on {} vols, decoder produces {}",
                        net.feature_dim(),
                        decoder.grid_size()
                    )));
                }
            }
            // One feature series over the whole panel, in panel order, so
            // early test days draw their input windows from training days.
            let gridded: Vec<_> = split
                .train
                .iter()
                .chain(&split.test)
                .map(|d| d.gridded.clone())
                .collect();
            let series = extract_series(decoder, &gridded)?;
            for (i, day) in split.test.iter().enumerate() {
                let t = split.train.len() + i;
                let z_hat = predict_next(predictor, &series, t - 1)?;
                let f_t = decoder.decode(&z_hat)?;
                let derivs: Vec<LocalDerivs> = match step2 {
                    StepTwo::Network(net) => day
                        .snapshot
                        .points
                        .iter()
                        .map(|p| surface_derivs(net, p.m, p.tau, &f_t))
                        .collect::<Result<_>>()?,
                    StepTwo::Quadratic => {
                        let mut samples = Vec::with_capacity(f_t.len());
                        for (im, &m) in split.grid.m.iter().enumerate() {
                            for (it, &tau) in split.grid.tau.iter().enumerate() {
                                samples.push(SurfacePoint {
                                    m,
                                    tau,
                                    vol: f_t[split.grid.flat(im, it)],
                                });
                            }
                        }
                        let fit = fit_dfw(&samples)?;
                        day.snapshot
                            .points
                            .iter()
                            .map(|p| dfw_derivs(&fit.coeffs, p.m, p.tau))
                            .collect()
                    }
                };
                days.push(PredictionDay {
                    date: day.snapshot.date,
                    truth: day.snapshot.points.clone(),
                    predicted: derivs.iter().map(|d| d.vol).collect(),
                    derivs,
                });
            }
        }
        BacktestModel::QuadraticCarry => {
            if split.train.is_empty() {
                return Err(Error::data(
                    "carry benchmark needs a day before the first test day",
                ));
            }
            for (i, day) in split.test.iter().enumerate() {
                let prev = if i == 0 {
                    split.train.last().expect("checked non-empty")
                } else {
                    &split.test[i - 1]
                };
                let fit = fit_dfw(&prev.snapshot.points)?;
                let derivs: Vec<LocalDerivs> = day
                    .snapshot
                    .points
                    .iter()
                    .map(|p| dfw_derivs(&fit.coeffs, p.m, p.tau))
                    .collect();
                days.push(PredictionDay {
                    date: day.snapshot.date,
                    truth: day.snapshot.points.clone(),
                    predicted: derivs.iter().map(|d| d.vol).collect(),
                    derivs,
                });
            }
        }
    }
    let run = PredictionRun { model: tag, days };
    run.validate()?;
    Ok(run)
}

/// Pooled root mean squared error over every (day, point) pair.
///
/// # Errors
/// Validation errors for empty or misaligned runs.
pub fn rmse(run: &PredictionRun) -> Result<f64> {
    run.validate()?;
    let mut total = 0.0;
    for day in &run.days {
        let mut s = 0.0;
        for (p, t) in day.predicted.iter().zip(&day.truth) {
            let e = p - t.vol;
            s += e * e;
        }
        total += s;
    }
    Ok((total / run.n_points() as f64).sqrt())
}

/// Pooled mean absolute percentage error over every (day, point) pair.
///
/// # Errors
/// Validation errors for empty or misaligned runs; `Error::Data` when a
/// ground-truth vol is zero (cannot occur with floored data).
pub fn mape(run: &PredictionRun) -> Result<f64> {
    run.validate()?;
    let mut total = 0.0;
    for day in &run.days {
        let mut s = 0.0;
        for (p, t) in day.predicted.iter().zip(&day.truth) {
            if t.vol == 0.0 {
                return Err(Error::data(format!(
                    "zero ground-truth vol on {} makes the percentage error undefined",
                    day.date
                )));
            }
            s += ((p - t.vol) / t.vol).abs();
        }
        total += s;
    }
    Ok(total / run.n_points() as f64)
}

/// Outcome of the one-sided Diebold-Mariano comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmResult {
    /// `mean(d) / sqrt(V / T)` for daily loss differentials `d`; zero for
    /// degenerate inputs.
    pub statistic: f64,
    /// Lower-tail normal probability: small values favor the first run.
    pub p_value: f64,
    /// Number of test days `T`.
    pub days: usize,
    /// The long-run variance estimate `V`.
    pub variance: f64,
    /// Bartlett-kernel truncation lag used for `V`.
    pub lag: usize,
    /// Set when `V` is not positive (e.g. identical runs); the p-value is
    /// then 0.5 by convention.
    pub degenerate: bool,
}

/// Tests whether the first run's forecast errors are smaller than the
/// second's.
///
/// The daily loss is the day's mean squared error; the statistic is the
/// mean loss differential over its HAC standard error (Bartlett kernel,
/// lag `floor(T^(1/3))`), and the p-value is the standard normal lower
/// tail, so values near zero reject equal accuracy in favor of the first
/// run.
///
/// # Errors
/// `Error::Data` when the runs do not cover identical days and points.
pub fn dm_test(first: &PredictionRun, second: &PredictionRun) -> Result<DmResult> {
    first.validate()?;
    second.validate()?;
    if first.days.len() != second.days.len() {
        return Err(Error::data(format!(
            "runs cover {} and {} days",
            first.days.len(),
            second.days.len()
        )));
    }
    let mut d = Vec::with_capacity(first.days.len());
    for (a, b) in first.days.iter().zip(&second.days) {
        if a.date != b.date || a.truth != b.truth {
            return Err(Error::data(format!(
                "runs disagree on the day or points at {}",
                a.date
            )));
        }
        let mse = |day: &PredictionDay| {
            let mut s = 0.0;
            for (p, t) in day.predicted.iter().zip(&day.truth) {
                let e = p - t.vol;
                s += e * e;
            }
            s / day.truth.len() as f64
        };
        d.push(mse(a) - mse(b));
    }
    let t_days = d.len();
    let tf = t_days as f64;
    let mean = d.iter().sum::<f64>() / tf;
    let lag = cbrt_floor(tf).min(t_days - 1);
    let gamma = |k: usize| {
        let mut s = 0.0;
        for t in k..t_days {
            s += (d[t] - mean) * (d[t - k] - mean);
        }
        s / tf
    };
    let mut variance = gamma(0);
    for k in 1..=lag {
        let w = 1.0 - k as f64 / (lag as f64 + 1.0);
        variance += 2.0 * w * gamma(k);
    }
    if !(variance > 0.0) {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 0.5,
            days: t_days,
            variance,
            lag,
            degenerate: true,
        });
    }
    let statistic = mean / (variance / tf).sqrt();
    Ok(DmResult {
        statistic,
        p_value: norm_cdf(statistic),
        days: t_days,
        variance,
        lag,
        degenerate: false,
    })
}

/// `floor(t^(1/3))` as a lag count.
fn cbrt_floor(t: f64) -> usize {
    let mut l = t.powf(1.0 / 3.0).floor() as usize;
    // Guard against the float landing just under an exact cube.
    while ((l + 1) * (l + 1) * (l + 1)) as f64 <= t {
        l += 1;
    }
    l
}

/// Mean negative parts of the calendar and butterfly diagnostics over all
/// (day, point) pairs: `(L_cal_minus, L_but_minus)`, both zero for an
/// arbitrage-free run and negative otherwise.
///
/// # Errors
/// Validation errors for empty or misaligned runs; `Error::Domain` if an
/// evaluator produced a non-positive vol.
pub fn arb_violation(run: &PredictionRun) -> Result<(f64, f64)> {
    run.validate()?;
    let mut cal = 0.0;
    let mut but = 0.0;
    for day in &run.days {
        for (d, p) in day.derivs.iter().zip(&day.truth) {
            cal += ell_cal(d, p.tau).min(0.0);
            but += ell_but(d, p.m, p.tau)?.min(0.0);
        }
    }
    let n = run.n_points() as f64;
    Ok((cal / n, but / n))
}
