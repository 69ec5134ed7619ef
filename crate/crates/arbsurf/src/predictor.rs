//! One-step-ahead feature prediction with a three-step LSTM.
//!
//! The predictor consumes three horizon aggregates of a feature series —
//! a 22-day mean `Z1`, a 5-day mean `Z2`, and the current value `Z3` — and
//! runs them through a single LSTM cell for exactly three steps (`h0 = c0
//! = 0`), a tanh readout `y_j = tanh(W_y h_j + b_y)`, and a linear output
//! head on `y_3`:
//!
//! ```text
//! Zhat_{T+1} = act_out(W_out y_3 + b_out),
//! ```
//!
//! with a positive-part output for sampled-vol features and an identity
//! output for component/latent features.
//!
//! Input/output scaling is part of the trained pipeline: sampled-vol
//! features pass through input batch normalization and the head emits
//! standardized values that are mapped back to vol scale and floored at
//! 0.01; component/latent features are standardized by fixed per-coordinate
//! training statistics on the way in and predicted on their original scale.
//! Training minimizes the mean squared one-step-ahead error over all days
//! with a full 22-day window, on the original feature scale.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureSeries};
use crate::nn::{
    minibatches, ActKind, Adam, BnStats, Dense, DenseVars, InputNorm, LayerDesc, LayerKind,
    LstmCell, LstmVars, NetworkParams, NormVars, Tape, Tensor, TrainConfig, Var,
};

/// Days in the long-horizon window.
pub const LONG_WINDOW: usize = 22;
/// Days in the medium-horizon window.
pub const MEDIUM_WINDOW: usize = 5;
/// Floor applied to predicted sampled vols.
pub const VOL_FLOOR: f64 = 0.01;
/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 12;

pub const PREDICTOR_MODEL_KIND: &str = "lstm-predictor";

/// The three horizon aggregates fed to the recurrence, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonInputs {
    /// 22-day mean of the feature vectors up to and including day T.
    pub z1: Vec<f64>,
    /// 5-day mean.
    pub z2: Vec<f64>,
    /// Current value `Z_T`.
    pub z3: Vec<f64>,
}

impl HorizonInputs {
    pub fn dim(&self) -> usize {
        self.z1.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.z2.len() != self.z1.len() || self.z3.len() != self.z1.len() {
            return Err(Error::shape(format!(
                "horizon inputs of unequal dimensions {}/{}/{}",
                self.z1.len(),
                self.z2.len(),
                self.z3.len()
            )));
        }
        Ok(())
    }
}

/// Exact window means and the current value at day `t` (0-based).
///
/// # Errors
/// `Error::Data` when `t` is out of range or fewer than 22 entries end at
/// `t`.
pub fn build_inputs(series: &FeatureSeries, t: usize) -> Result<HorizonInputs> {
    if t >= series.len() {
        return Err(Error::data(format!(
            "day index {t} outside a series of length {}",
            series.len()
        )));
    }
    if t + 1 < LONG_WINDOW {
        return Err(Error::data(format!(
            "day index {t} has only {} days of history, need {LONG_WINDOW}",
            t + 1
        )));
    }
    let dim = series.dim;
    let window_mean = |len: usize| -> Vec<f64> {
        let mut acc = vec![0.0; dim];
        for z in &series.z[t + 1 - len..=t] {
            for (a, &v) in acc.iter_mut().zip(z) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= len as f64;
        }
        acc
    };
    Ok(HorizonInputs {
        z1: window_mean(LONG_WINDOW),
        z2: window_mean(MEDIUM_WINDOW),
        z3: series.z[t].clone(),
    })
}

/// The raw recurrence parameters: one LSTM cell, the tanh readout, and the
/// output head. The readout width equals the hidden width.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub cell: LstmCell,
    pub readout: Dense,
    pub head: Dense,
    /// Output activation: `Relu` for sampled-vol features, `Identity`
    /// otherwise.
    pub out_act: ActKind,
}

impl LstmParams {
    pub fn new<R: RngCore + ?Sized>(
        dim: usize,
        hidden: usize,
        out_act: ActKind,
        rng: &mut R,
    ) -> Self {
        Self {
            cell: LstmCell::new(dim, hidden, rng),
            readout: Dense::new(hidden, hidden, ActKind::Tanh, rng),
            head: Dense::new(hidden, dim, ActKind::Identity, rng),
            out_act,
        }
    }

    pub fn dim(&self) -> usize {
        self.cell.wx.rows
    }

    pub fn hidden(&self) -> usize {
        self.cell.hidden
    }
}

/// Runs the bare three-step recurrence and output head on unscaled inputs.
/// No input normalization, destandardization, or floor is applied — this
/// is the network map itself; [`predict_next`] wraps it with the trained
/// pipeline's scaling.
pub fn lstm_forward(params: &LstmParams, inputs: &HorizonInputs) -> Result<Vec<f64>> {
    inputs.validate()?;
    if inputs.dim() != params.dim() {
        return Err(Error::shape(format!(
            "inputs of dimension {} against a {}-dimensional predictor",
            inputs.dim(),
            params.dim()
        )));
    }
    let hidden = params.hidden();
    let mut h = Tensor::zeros(1, hidden);
    let mut c = Tensor::zeros(1, hidden);
    for z in [&inputs.z1, &inputs.z2, &inputs.z3] {
        let x = Tensor::row(z.clone());
        let (hn, cn) = params.cell.eval_step(&x, &h, &c)?;
        h = hn;
        c = cn;
    }
    let y = params.readout.eval(&h)?;
    let out = params.head.eval(&y)?;
    Ok(out.values.iter().map(|&v| params.out_act.apply(v)).collect())
}

/// Input/output scaling attached to a trained predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum IoTransform {
    /// Sampled-vol pipeline: batch normalization on the inputs; the head
    /// output is destandardized by fixed training statistics and floored.
    BatchNorm {
        norm: InputNorm,
        out_mean: Vec<f64>,
        out_std: Vec<f64>,
        floor: f64,
    },
    /// Component/latent pipeline: fixed input standardization only.
    Standardize { mean: Vec<f64>, std: Vec<f64> },
}

/// A trained feature predictor: recurrence parameters plus the scaling
/// pipeline for its feature kind.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorModel {
    pub kind: FeatureKind,
    pub params: LstmParams,
    pub io: IoTransform,
}

/// Training configuration: optimizer settings plus the hidden width.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    pub train: TrainConfig,
    pub hidden: usize,
}

impl Default for PredictorConfig {
    /// 200 epochs, batch 128, 12 hidden units, learning rate 0.01.
    fn default() -> Self {
        Self {
            train: TrainConfig::new(200, 128, 0.01, 0),
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        self.train.validate()
    }
}

/// Per-coordinate mean and standard deviation over all entries of a
/// series, with the deviation floored away from zero.
fn series_stats(series: &FeatureSeries) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (series.len(), series.dim);
    let mut mean = vec![0.0; d];
    for z in &series.z {
        for (m, &v) in mean.iter_mut().zip(z) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for z in &series.z {
        for ((s, &v), &m) in var.iter_mut().zip(z).zip(&mean) {
            let dev = v - m;
            *s += dev * dev;
        }
    }
    let denom = (n - 1).max(1) as f64;
    let std = var.iter().map(|&s| (s / denom).sqrt().max(1e-8)).collect();
    (mean, std)
}

fn rows_tensor(series: &FeatureSeries, pairs: &[usize], pick: impl Fn(usize) -> Vec<f64>) -> Tensor {
    let dim = series.dim;
    let mut values = Vec::with_capacity(pairs.len() * dim);
    for &t in pairs {
        values.extend_from_slice(&pick(t));
    }
    Tensor {
        rows: pairs.len(),
        cols: dim,
        values,
    }
}

struct GraphVars {
    cell: LstmVars,
    readout: DenseVars,
    head: DenseVars,
    norm: Option<NormVars>,
}

/// Builds the full pipeline graph on a tape: input scaling, three
/// recurrence steps, readout, head, and output scaling. `x1..x3` are raw
/// (unscaled) feature rows.
fn pipeline_graph(
    tape: &mut Tape,
    params: &LstmParams,
    io: &mut IoTransform,
    vars: &GraphVars,
    xs: [Var; 3],
    train: bool,
) -> Result<Var> {
    let rows = tape.value(xs[0]).rows;
    let hidden = params.hidden();
    let mut h = tape.leaf(Tensor::zeros(rows, hidden));
    let mut c = tape.leaf(Tensor::zeros(rows, hidden));
    for x in xs {
        let scaled = match io {
            IoTransform::BatchNorm { norm, .. } => {
                let nv = vars.norm.ok_or_else(|| {
                    Error::config("batch-norm pipeline attached without norm handles")
                })?;
                norm.forward(tape, nv, x, train)?
            }
            IoTransform::Standardize { mean, std } => {
                let a: Vec<f64> = std.iter().map(|&s| 1.0 / s).collect();
                let d: Vec<f64> = mean.iter().zip(&a).map(|(&m, &a)| -m * a).collect();
                tape.affine_cols(x, &a, &d)?
            }
        };
        let (hn, cn) = params.cell.step(tape, vars.cell, scaled, h, c)?;
        h = hn;
        c = cn;
    }
    let y = params.readout.forward(tape, vars.readout, h)?;
    let out = params.head.forward(tape, vars.head, y)?;
    match io {
        IoTransform::BatchNorm {
            out_mean,
            out_std,
            floor,
            ..
        } => {
            let rescaled = tape.affine_cols(out, out_std, out_mean)?;
            Ok(tape.clamp_min(rescaled, *floor))
        }
        IoTransform::Standardize { .. } => Ok(out),
    }
}

/// Trains a predictor on a feature series. Training pairs are every day
/// `t` with a full 22-day window and a successor: inputs `build_inputs(t)`,
/// target `Z_{t+1}`. Returns the model and the per-epoch loss curve
/// (mean squared prediction norm per pair, original feature scale).
///
/// # Errors
/// `Error::Data` with fewer than 23 entries; `Error::Config` on a bad
/// configuration; `Error::Diverged` if the loss leaves the finite range.
pub fn train_predictor(
    series: &FeatureSeries,
    config: &PredictorConfig,
) -> Result<(PredictorModel, Vec<f64>)> {
    config.validate()?;
    series.validate()?;
    if series.len() < LONG_WINDOW + 1 {
        return Err(Error::data(format!(
            "series of length {} cannot form a training pair; need {}",
            series.len(),
            LONG_WINDOW + 1
        )));
    }
    let dim = series.dim;
    let pairs: Vec<usize> = (LONG_WINDOW - 1..series.len() - 1).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(config.train.seed);
    let out_act = match series.kind {
        FeatureKind::Sam => ActKind::Relu,
        FeatureKind::Pca | FeatureKind::Vae => ActKind::Identity,
    };
    let params = LstmParams::new(dim, config.hidden, out_act, &mut rng);
    let (mean, std) = series_stats(series);
    let io = match series.kind {
        FeatureKind::Sam => IoTransform::BatchNorm {
            norm: InputNorm::new(dim),
            out_mean: mean,
            out_std: std,
            floor: VOL_FLOOR,
        },
        FeatureKind::Pca | FeatureKind::Vae => IoTransform::Standardize { mean, std },
    };
    let mut model = PredictorModel {
        kind: series.kind,
        params,
        io,
    };

    // Window means are reused across epochs; precompute one tensor row per
    // training pair.
    let horizons: Vec<HorizonInputs> = pairs
        .iter()
        .map(|&t| build_inputs(series, t))
        .collect::<Result<_>>()?;
    let x1_all = rows_tensor(series, &pairs, |t| horizons[t - (LONG_WINDOW - 1)].z1.clone());
    let x2_all = rows_tensor(series, &pairs, |t| horizons[t - (LONG_WINDOW - 1)].z2.clone());
    let x3_all = rows_tensor(series, &pairs, |t| horizons[t - (LONG_WINDOW - 1)].z3.clone());
    let y_all = rows_tensor(series, &pairs, |t| series.z[t + 1].clone());

    let take = |src: &Tensor, idx: &[usize]| -> Tensor {
        let mut values = Vec::with_capacity(idx.len() * dim);
        for &i in idx {
            values.extend_from_slice(&src.values[i * dim..(i + 1) * dim]);
        }
        Tensor {
            rows: idx.len(),
            cols: dim,
            values,
        }
    };

    let mut adam = Adam::new(&config.train);
    let mut curve = Vec::with_capacity(config.train.epochs);
    for epoch in 0..config.train.epochs {
        let batches = minibatches(pairs.len(), config.train.batch_size, &mut rng);
        let mut loss_sum = 0.0;
        for batch in batches {
            let nb = batch.len();
            let mut tape = Tape::new();
            let vars = GraphVars {
                cell: model.params.cell.attach(&mut tape),
                readout: model.params.readout.attach(&mut tape),
                head: model.params.head.attach(&mut tape),
                norm: match &model.io {
                    IoTransform::BatchNorm { norm, .. } => Some(norm.attach(&mut tape)),
                    IoTransform::Standardize { .. } => None,
                },
            };
            let x1 = tape.leaf(take(&x1_all, &batch));
            let x2 = tape.leaf(take(&x2_all, &batch));
            let x3 = tape.leaf(take(&x3_all, &batch));
            let out = pipeline_graph(
                &mut tape,
                &model.params,
                &mut model.io,
                &vars,
                [x1, x2, x3],
                true,
            )?;
            let target = tape.leaf(take(&y_all, &batch));
            let resid = tape.sub(out, target)?;
            let sq = tape.square(resid);
            let total = tape.sum_all(sq);
            let loss = tape.scale(total, 1.0 / nb as f64);

            let loss_v = tape.value(loss).values[0];
            if !loss_v.is_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}: loss {loss_v}")));
            }
            loss_sum += loss_v * nb as f64 / pairs.len() as f64;

            let grads = tape.backward(loss)?;
            let PredictorModel { params, io, .. } = &mut model;
            let mut grad_slices: Vec<&[f64]> = Vec::new();
            grad_slices.extend(LstmCell::grads(vars.cell, &grads)?);
            grad_slices.push(grads.of(vars.readout.w)?);
            grad_slices.push(grads.of(vars.readout.b)?);
            grad_slices.push(grads.of(vars.head.w)?);
            grad_slices.push(grads.of(vars.head.b)?);
            let mut param_slices: Vec<&mut [f64]> = Vec::new();
            param_slices.extend(params.cell.params_mut());
            param_slices.push(&mut params.readout.w.values);
            param_slices.push(&mut params.readout.b.values);
            param_slices.push(&mut params.head.w.values);
            param_slices.push(&mut params.head.b.values);
            if let (IoTransform::BatchNorm { norm, .. }, Some(nv)) = (io, vars.norm) {
                grad_slices.push(grads.of(nv.gamma)?);
                grad_slices.push(grads.of(nv.beta)?);
                param_slices.extend(norm.params_mut());
            }
            let mut updates: Vec<(&mut [f64], &[f64])> =
                param_slices.into_iter().zip(grad_slices).collect();
            adam.step(&mut updates, config.train.learning_rate)?;
        }
        curve.push(loss_sum);
    }
    Ok((model, curve))
}

/// Predicts `Z_{t+1}` from the series history ending at day `t` (0-based)
/// through the trained pipeline.
pub fn predict_next(model: &PredictorModel, series: &FeatureSeries, t: usize) -> Result<Vec<f64>> {
    if series.kind != model.kind {
        return Err(Error::mode(format!(
            "{} series fed to a {} predictor",
            series.kind.tag(),
            model.kind.tag()
        )));
    }
    let inputs = build_inputs(series, t)?;
    predict_from_inputs(model, &inputs)
}

/// Predicts directly from pre-built horizon aggregates (raw feature
/// scale).
pub fn predict_from_inputs(model: &PredictorModel, inputs: &HorizonInputs) -> Result<Vec<f64>> {
    inputs.validate()?;
    if inputs.dim() != model.params.dim() {
        return Err(Error::shape(format!(
            "inputs of dimension {} against a {}-dimensional predictor",
            inputs.dim(),
            model.params.dim()
        )));
    }
    let hidden = model.params.hidden();
    let mut h = Tensor::zeros(1, hidden);
    let mut c = Tensor::zeros(1, hidden);
    for z in [&inputs.z1, &inputs.z2, &inputs.z3] {
        let raw = Tensor::row(z.clone());
        let x = match &model.io {
            IoTransform::BatchNorm { norm, .. } => norm.apply_eval(&raw)?,
            IoTransform::Standardize { mean, std } => {
                let mut t = raw;
                for ((v, &m), &s) in t.values.iter_mut().zip(mean).zip(std) {
                    *v = (*v - m) / s;
                }
                t
            }
        };
        let (hn, cn) = model.params.cell.eval_step(&x, &h, &c)?;
        h = hn;
        c = cn;
    }
    let y = model.params.readout.eval(&h)?;
    let out = model.params.head.eval(&y)?;
    Ok(match &model.io {
        IoTransform::BatchNorm {
            out_mean,
            out_std,
            floor,
            ..
        } => out
            .values
            .iter()
            .zip(out_std)
            .zip(out_mean)
            .map(|((&v, &s), &m)| (v * s + m).max(*floor))
            .collect(),
        IoTransform::Standardize { .. } => out
            .values
            .iter()
            .map(|&v| model.params.out_act.apply(v))
            .collect(),
    })
}

fn kind_code(kind: FeatureKind) -> f64 {
    match kind {
        FeatureKind::Sam => 0.0,
        FeatureKind::Pca => 1.0,
        FeatureKind::Vae => 2.0,
    }
}

impl PredictorModel {
    pub fn to_params(&self) -> NetworkParams {
        let p = &self.params;
        let mut layers = vec![
            LayerDesc {
                kind: LayerKind::Lstm,
                activation: ActKind::Tanh,
                fan_in: p.dim() as u32,
                fan_out: p.hidden() as u32,
            },
            LayerDesc {
                kind: LayerKind::Dense,
                activation: p.readout.act,
                fan_in: p.hidden() as u32,
                fan_out: p.hidden() as u32,
            },
            LayerDesc {
                kind: LayerKind::Dense,
                activation: p.out_act,
                fan_in: p.hidden() as u32,
                fan_out: p.dim() as u32,
            },
        ];
        let mut tensors = vec![
            ("cell.wx".to_string(), p.cell.wx.clone()),
            ("cell.wh".to_string(), p.cell.wh.clone()),
            ("cell.b".to_string(), p.cell.b.clone()),
            ("readout.w".to_string(), p.readout.w.clone()),
            ("readout.b".to_string(), p.readout.b.clone()),
            ("head.w".to_string(), p.head.w.clone()),
            ("head.b".to_string(), p.head.b.clone()),
            (
                "feature_kind".to_string(),
                Tensor::row(vec![kind_code(self.kind)]),
            ),
        ];
        let mut norms = Vec::new();
        match &self.io {
            IoTransform::BatchNorm {
                norm,
                out_mean,
                out_std,
                floor,
            } => {
                layers.push(LayerDesc {
                    kind: LayerKind::Norm,
                    activation: ActKind::Identity,
                    fan_in: p.dim() as u32,
                    fan_out: p.dim() as u32,
                });
                norms.push(BnStats {
                    mean: norm.running_mean.clone(),
                    var: norm.running_var.clone(),
                });
                tensors.push(("norm.gamma".to_string(), norm.gamma.clone()));
                tensors.push(("norm.beta".to_string(), norm.beta.clone()));
                tensors.push(("out_mean".to_string(), Tensor::row(out_mean.clone())));
                tensors.push(("out_std".to_string(), Tensor::row(out_std.clone())));
                tensors.push(("floor".to_string(), Tensor::row(vec![*floor])));
            }
            IoTransform::Standardize { mean, std } => {
                tensors.push(("in_mean".to_string(), Tensor::row(mean.clone())));
                tensors.push(("in_std".to_string(), Tensor::row(std.clone())));
            }
        }
        NetworkParams {
            model_kind: PREDICTOR_MODEL_KIND.to_string(),
            layers,
            norms,
            tensors,
        }
    }

    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        if params.model_kind != PREDICTOR_MODEL_KIND {
            return Err(Error::format(format!(
                "expected {PREDICTOR_MODEL_KIND:?} parameters, found {:?}",
                params.model_kind
            )));
        }
        if params.layers.len() < 3
            || params.layers[0].kind != LayerKind::Lstm
            || params.layers[1].kind != LayerKind::Dense
            || params.layers[2].kind != LayerKind::Dense
        {
            return Err(Error::format("unexpected predictor layer layout"));
        }
        let dim = params.layers[0].fan_in as usize;
        let hidden = params.layers[0].fan_out as usize;
        let out_act = params.layers[2].activation;
        if out_act != ActKind::Relu && out_act != ActKind::Identity {
            return Err(Error::format("output activation must be relu or identity"));
        }

        let expect = |name: &str, rows: usize, cols: usize| -> Result<Tensor> {
            let t = params.tensor(name)?;
            if t.rows != rows || t.cols != cols {
                return Err(Error::format(format!(
                    "tensor {name}: {}x{}, expected {rows}x{cols}",
                    t.rows, t.cols
                )));
            }
            Ok(t.clone())
        };
        let cell = LstmCell {
            wx: expect("cell.wx", dim, 4 * hidden)?,
            wh: expect("cell.wh", hidden, 4 * hidden)?,
            b: expect("cell.b", 1, 4 * hidden)?,
            hidden,
        };
        let readout = Dense {
            w: expect("readout.w", hidden, hidden)?,
            b: expect("readout.b", 1, hidden)?,
            act: params.layers[1].activation,
        };
        let head = Dense {
            w: expect("head.w", hidden, dim)?,
            b: expect("head.b", 1, dim)?,
            act: ActKind::Identity,
        };
        let kind = match params.tensor("feature_kind")?.values[0] as i64 {
            0 => FeatureKind::Sam,
            1 => FeatureKind::Pca,
            2 => FeatureKind::Vae,
            other => {
                return Err(Error::format(format!("unknown feature kind code {other}")))
            }
        };
        let io = if kind == FeatureKind::Sam {
            let stats = params
                .norms
                .first()
                .ok_or_else(|| Error::format("sampled-vol predictor lacks norm statistics"))?;
            let mut norm = InputNorm::new(dim);
            norm.gamma = expect("norm.gamma", 1, dim)?;
            norm.beta = expect("norm.beta", 1, dim)?;
            norm.running_mean = stats.mean.clone();
            norm.running_var = stats.var.clone();
            IoTransform::BatchNorm {
                norm,
                out_mean: expect("out_mean", 1, dim)?.values,
                out_std: expect("out_std", 1, dim)?.values,
                floor: params.tensor("floor")?.values[0],
            }
        } else {
            IoTransform::Standardize {
                mean: expect("in_mean", 1, dim)?.values,
                std: expect("in_std", 1, dim)?.values,
            }
        };
        Ok(Self {
            kind,
            params: LstmParams {
                cell,
                readout,
                head,
                out_act,
            },
            io,
        })
    }
}
