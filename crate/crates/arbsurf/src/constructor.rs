//! Arbitrage-penalized surface construction.
//!
//! A feedforward network `f(m, tau, F)` maps log-moneyness, maturity, and a
//! conditioning vol set `F` (the feature-decoded surface values) to an
//! implied vol. Every activation, including the output, is Softplus, so the
//! surface is strictly positive and twice differentiable in its inputs by
//! construction. Training minimizes
//!
//! ```text
//! L_C = L_S + lambda (L_C3 + L_C4 + L_C5),
//! ```
//!
//! where `L_S` is the mean squared error against observed quotes and the
//! penalties are hinge averages of the calendar and butterfly diagnostics
//! over a dense probe grid plus a wing-growth term at extreme moneyness.
//! Surfaces that drive the penalties to zero are free of static arbitrage
//! at the probe resolution.
//!
//! The probe grid clusters nodes near the money via a cube map in
//! moneyness (`m = x^3` for `x` uniform) and spaces maturities
//! log-uniformly from one calendar day out past the longest quoted expiry.
//! Derivatives of the network output feeding the diagnostics come from
//! central finite differences on the inputs, and gradients backpropagate
//! through every stencil evaluation, so the penalty is an ordinary
//! first-order training objective.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dataset::FixedGrid;
use crate::error::{Error, Result};
use crate::nn::{
    shuffled_indices, ActKind, Adam, BnStats, Dense, DenseVars, InputNorm, LayerDesc, LayerKind,
    Mlp, NetworkParams, NormVars, Tape, Tensor, TrainConfig, Var,
};
use crate::surface::{LocalDerivs, SurfacePoint};

/// Step for the moneyness stencil.
pub const DELTA_M: f64 = 1e-4;
/// Step for the maturity stencil (years).
pub const DELTA_TAU: f64 = 1e-4;
/// Default hidden width.
pub const DEFAULT_HIDDEN: usize = 50;
/// Default penalty weight.
pub const DEFAULT_LAMBDA: f64 = 1.0;

pub const SURFACE_MODEL_KIND: &str = "surface-net";

/// Probe-grid configuration. Defaults follow the quoted-surface extent:
/// moneyness bounds `ln 0.6` and `ln 2`, longest maturity two years.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGridConfig {
    /// Most negative quoted log-moneyness (must be < 0).
    pub m_min: f64,
    /// Most positive quoted log-moneyness (must be > 0).
    pub m_max: f64,
    /// Longest quoted maturity in years.
    pub tau_max: f64,
    /// Nodes along the moneyness axis.
    pub m_nodes: usize,
    /// Nodes along the maturity axis.
    pub tau_nodes: usize,
}

impl Default for PenaltyGridConfig {
    fn default() -> Self {
        Self {
            m_min: 0.6f64.ln(),
            m_max: 2.0f64.ln(),
            tau_max: 730.0 / 365.0,
            m_nodes: 41,
            tau_nodes: 41,
        }
    }
}

impl PenaltyGridConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.m_min < 0.0 && self.m_max > 0.0) {
            return Err(Error::config(format!(
                "moneyness bounds must straddle zero, got [{}, {}]",
                self.m_min, self.m_max
            )));
        }
        if !(self.tau_max > 0.0) {
            return Err(Error::config(format!(
                "longest maturity must be positive, got {}",
                self.tau_max
            )));
        }
        if self.m_nodes < 2 || self.tau_nodes < 2 {
            return Err(Error::config(format!(
                "each grid axis needs at least 2 nodes, got {}x{}",
                self.m_nodes, self.tau_nodes
            )));
        }
        Ok(())
    }
}

/// Probe nodes for the arbitrage penalties: a dense interior grid
/// (calendar + butterfly) and an extreme-moneyness set (wing growth).
/// Both are `(m, tau)` lists; the interior grid is moneyness-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyGrids {
    /// Dense grid: cube-spaced moneyness covering `[2 m_min, 2 m_max]`
    /// crossed with log-spaced maturities on `[1/365, tau_max + 1]`.
    pub c34: Vec<(f64, f64)>,
    /// Extreme moneyness `{6 m_min, 4 m_min, 4 m_max, 6 m_max}` crossed
    /// with the same maturities.
    pub c5: Vec<(f64, f64)>,
}

/// Builds the probe grids. The moneyness nodes are `x^3` for `x` uniform on
/// `[-(-2 m_min)^(1/3), (2 m_max)^(1/3)]` — the cube map fixes 0 and
/// clusters nodes near the money while the endpoints land exactly on
/// `2 m_min` and `2 m_max`.
pub fn build_penalty_grids(config: &PenaltyGridConfig) -> Result<PenaltyGrids> {
    config.validate()?;
    let x_lo = -(-2.0 * config.m_min).cbrt();
    let x_hi = (2.0 * config.m_max).cbrt();
    let m_nodes: Vec<f64> = (0..config.m_nodes)
        .map(|i| {
            let x = x_lo + (x_hi - x_lo) * i as f64 / (config.m_nodes - 1) as f64;
            x * x * x
        })
        .collect();
    let t_lo = (1.0 / 365.0f64).ln();
    let t_hi = (config.tau_max + 1.0).ln();
    let tau_nodes: Vec<f64> = (0..config.tau_nodes)
        .map(|i| (t_lo + (t_hi - t_lo) * i as f64 / (config.tau_nodes - 1) as f64).exp())
        .collect();

    let mut c34 = Vec::with_capacity(m_nodes.len() * tau_nodes.len());
    for &m in &m_nodes {
        for &tau in &tau_nodes {
            c34.push((m, tau));
        }
    }
    let wings = [
        6.0 * config.m_min,
        4.0 * config.m_min,
        4.0 * config.m_max,
        6.0 * config.m_max,
    ];
    let mut c5 = Vec::with_capacity(4 * tau_nodes.len());
    for &m in &wings {
        for &tau in &tau_nodes {
            c5.push((m, tau));
        }
    }
    Ok(PenaltyGrids { c34, c5 })
}

/// The surface network: joint input batch normalization over
/// `[m, tau, F]` followed by three Softplus hidden layers and a Softplus
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceNet {
    pub norm: InputNorm,
    pub net: Mlp,
}

impl SurfaceNet {
    pub fn new<R: RngCore + ?Sized>(
        feature_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if feature_dim == 0 || hidden == 0 {
            return Err(Error::config(format!(
                "surface net needs positive dimensions, got features {feature_dim} hidden {hidden}"
            )));
        }
        let input = feature_dim + 2;
        Ok(Self {
            norm: InputNorm::new(input),
            net: Mlp::new(
                &[input, hidden, hidden, hidden, 1],
                &[ActKind::Softplus; 4],
                rng,
            )?,
        })
    }

    /// Dimension of the conditioning vol set `F`.
    pub fn feature_dim(&self) -> usize {
        self.net.layers[0].w.rows - 2
    }

    pub fn hidden(&self) -> usize {
        self.net.layers[0].w.cols
    }

    fn check_features(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.feature_dim() {
            return Err(Error::shape(format!(
                "{} conditioning values against a net expecting {}",
                f.len(),
                self.feature_dim()
            )));
        }
        Ok(())
    }

    pub fn to_params(&self) -> NetworkParams {
        let input = self.norm.dim();
        let mut layers = vec![LayerDesc {
            kind: LayerKind::Norm,
            activation: ActKind::Identity,
            fan_in: input as u32,
            fan_out: input as u32,
        }];
        let mut tensors = vec![
            ("norm.gamma".to_string(), self.norm.gamma.clone()),
            ("norm.beta".to_string(), self.norm.beta.clone()),
        ];
        for (i, layer) in self.net.layers.iter().enumerate() {
            layers.push(LayerDesc {
                kind: LayerKind::Dense,
                activation: layer.act,
                fan_in: layer.w.rows as u32,
                fan_out: layer.w.cols as u32,
            });
            tensors.push((format!("l{i}.w"), layer.w.clone()));
            tensors.push((format!("l{i}.b"), layer.b.clone()));
        }
        NetworkParams {
            model_kind: SURFACE_MODEL_KIND.to_string(),
            layers,
            norms: vec![BnStats {
                mean: self.norm.running_mean.clone(),
                var: self.norm.running_var.clone(),
            }],
            tensors,
        }
    }

    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        if params.model_kind != SURFACE_MODEL_KIND {
            return Err(Error::format(format!(
                "expected {SURFACE_MODEL_KIND:?} parameters, found {:?}",
                params.model_kind
            )));
        }
        if params.layers.len() < 3 || params.layers[0].kind != LayerKind::Norm {
            return Err(Error::format("unexpected surface-net layer layout"));
        }
        let input = params.layers[0].fan_in as usize;
        let stats = params
            .norms
            .first()
            .ok_or_else(|| Error::format("surface net lacks norm statistics"))?;
        let mut norm = InputNorm::new(input);
        norm.gamma = params.tensor("norm.gamma")?.clone();
        norm.beta = params.tensor("norm.beta")?.clone();
        if norm.gamma.cols != input || norm.beta.cols != input || stats.mean.len() != input {
            return Err(Error::format("surface-net norm dimensions disagree"));
        }
        norm.running_mean = stats.mean.clone();
        norm.running_var = stats.var.clone();

        let mut fan_in = input;
        let mut denses = Vec::new();
        for (i, desc) in params.layers[1..].iter().enumerate() {
            if desc.kind != LayerKind::Dense || desc.fan_in as usize != fan_in {
                return Err(Error::format(format!("surface-net layer {i} malformed")));
            }
            let w = params.tensor(&format!("l{i}.w"))?.clone();
            let b = params.tensor(&format!("l{i}.b"))?.clone();
            if w.rows != fan_in || w.cols != desc.fan_out as usize || b.cols != w.cols {
                return Err(Error::format(format!(
                    "surface-net layer {i}: weight {}x{}, bias {}",
                    w.rows, w.cols, b.cols
                )));
            }
            fan_in = w.cols;
            denses.push(Dense {
                w,
                b,
                act: desc.activation,
            });
        }
        if fan_in != 1 {
            return Err(Error::format("surface net must end in a single output"));
        }
        Ok(Self {
            norm,
            net: Mlp { layers: denses },
        })
    }
}

/// Evaluates the surface at one point (eval-mode normalization).
pub fn surface_eval(net: &SurfaceNet, m: f64, tau: f64, f: &[f64]) -> Result<f64> {
    let mt = Tensor {
        rows: 1,
        cols: 2,
        values: vec![m, tau],
    };
    Ok(eval_day_outputs(net, &mt, f)?.values[0])
}

/// Evaluates the surface on every node of a fixed grid, moneyness-major,
/// sharing the conditioning-vector projection across nodes.
pub fn surface_eval_grid(net: &SurfaceNet, grid: &FixedGrid, f: &[f64]) -> Result<Vec<f64>> {
    grid.validate()?;
    let mut values = Vec::with_capacity(grid.size() * 2);
    for &m in &grid.m {
        for &tau in &grid.tau {
            values.push(m);
            values.push(tau);
        }
    }
    let mt = Tensor {
        rows: grid.size(),
        cols: 2,
        values,
    };
    Ok(eval_day_outputs(net, &mt, f)?.values)
}

/// Local value and input derivatives by central finite differences with
/// caller-chosen steps.
pub fn surface_derivs_with_steps(
    net: &SurfaceNet,
    m: f64,
    tau: f64,
    f: &[f64],
    dm: f64,
    dt: f64,
) -> Result<LocalDerivs> {
    let f0 = surface_eval(net, m, tau, f)?;
    let fmp = surface_eval(net, m + dm, tau, f)?;
    let fmm = surface_eval(net, m - dm, tau, f)?;
    let ftp = surface_eval(net, m, tau + dt, f)?;
    let ftm = surface_eval(net, m, tau - dt, f)?;
    Ok(LocalDerivs {
        vol: f0,
        d_m: (fmp - fmm) / (2.0 * dm),
        d_mm: (fmp - 2.0 * f0 + fmm) / (dm * dm),
        d_tau: (ftp - ftm) / (2.0 * dt),
    })
}

/// Local value and derivatives at the default stencil steps.
pub fn surface_derivs(net: &SurfaceNet, m: f64, tau: f64, f: &[f64]) -> Result<LocalDerivs> {
    surface_derivs_with_steps(net, m, tau, f, DELTA_M, DELTA_TAU)
}

/// Stencil rows for a node list: five row blocks
/// `[centers; m+; m-; tau+; tau-]`, each of `nodes.len()` rows.
fn stencil_tensor(nodes: &[(f64, f64)], dm: f64, dt: f64) -> Tensor {
    let n = nodes.len();
    let mut values = Vec::with_capacity(5 * n * 2);
    for shift in [(0.0, 0.0), (dm, 0.0), (-dm, 0.0), (0.0, dt), (0.0, -dt)] {
        for &(m, tau) in nodes {
            values.push(m + shift.0);
            values.push(tau + shift.1);
        }
    }
    Tensor {
        rows: 5 * n,
        cols: 2,
        values,
    }
}

/// Evaluates the net on many `(m, tau)` rows sharing one conditioning
/// vector, eval-mode normalization. The first layer is factorized: the
/// `F`-dependent part is computed once and broadcast over the rows.
fn eval_day_outputs(net: &SurfaceNet, mt: &Tensor, f: &[f64]) -> Result<Tensor> {
    net.check_features(f)?;
    let (a, b) = net.norm.eval_affine();
    let first = &net.net.layers[0];
    let hidden = first.w.cols;
    // Row-independent part of the first preactivation: bias, the shifted
    // m/tau columns' offsets, and the normalized conditioning vector.
    let mut day_row = first.b.values.clone();
    for (j, dr) in day_row.iter_mut().enumerate() {
        *dr += b[0] * first.w.get(0, j) + b[1] * first.w.get(1, j);
        for (k, &fv) in f.iter().enumerate() {
            *dr += (a[k + 2] * fv + b[k + 2]) * first.w.get(k + 2, j);
        }
    }
    let mut h = Tensor::zeros(mt.rows, hidden);
    for r in 0..mt.rows {
        let sm = a[0] * mt.get(r, 0);
        let st = a[1] * mt.get(r, 1);
        let seg = &mut h.values[r * hidden..(r + 1) * hidden];
        for (j, v) in seg.iter_mut().enumerate() {
            let z = day_row[j] + sm * first.w.get(0, j) + st * first.w.get(1, j);
            *v = first.act.apply(z);
        }
    }
    let mut out = h;
    for layer in &net.net.layers[1..] {
        out = layer.eval(&out)?;
    }
    Ok(out)
}

/// Splits stencil-block outputs into `(vol, d_m, d_mm, d_tau)` per node.
fn combine_stencil(out: &[f64], n: usize, dm: f64, dt: f64, i: usize) -> LocalDerivs {
    let (f0, fmp, fmm) = (out[i], out[n + i], out[2 * n + i]);
    let (ftp, ftm) = (out[3 * n + i], out[4 * n + i]);
    LocalDerivs {
        vol: f0,
        d_m: (fmp - fmm) / (2.0 * dm),
        d_mm: (fmp - 2.0 * f0 + fmm) / (dm * dm),
        d_tau: (ftp - ftm) / (2.0 * dt),
    }
}

fn penalty_sums_for_day(
    net: &SurfaceNet,
    f: &[f64],
    grids: &PenaltyGrids,
    s34: &Tensor,
    s5: &Tensor,
    dm: f64,
    dt: f64,
) -> Result<(f64, f64, f64)> {
    let n34 = grids.c34.len();
    let n5 = grids.c5.len();
    let mut c3 = 0.0;
    let mut c4 = 0.0;
    if n34 > 0 {
        let out = eval_day_outputs(net, s34, f)?;
        for (i, &(m, tau)) in grids.c34.iter().enumerate() {
            let d = combine_stencil(&out.values, n34, dm, dt, i);
            if !(d.vol > 0.0) {
                return Err(Error::domain(format!(
                    "surface value {} at ({m}, {tau}) is not positive",
                    d.vol
                )));
            }
            let cal = d.vol + 2.0 * tau * d.d_tau;
            c3 += (-cal).max(0.0);
            let g = 1.0 - m * d.d_m / d.vol;
            let but = g * g - 0.25 * (d.vol * tau * d.d_m).powi(2) + tau * d.vol * d.d_mm;
            c4 += (-but).max(0.0);
        }
    }
    let mut c5 = 0.0;
    if n5 > 0 {
        let out = eval_day_outputs(net, s5, f)?;
        for i in 0..n5 {
            let d = combine_stencil(&out.values, n5, dm, dt, i);
            c5 += (d.vol * d.d_mm + d.d_m * d.d_m).abs();
        }
    }
    Ok((c3, c4, c5))
}

/// Average arbitrage penalties of the surfaces conditioned on each vol set
/// in `f_batch`: hinge of the calendar and butterfly diagnostics over the
/// dense grid, and the wing-growth magnitude over the extreme-moneyness
/// set. All three are means over (day, node).
pub fn penalty_losses(
    net: &SurfaceNet,
    f_batch: &[Vec<f64>],
    grids: &PenaltyGrids,
) -> Result<(f64, f64, f64)> {
    if f_batch.is_empty() {
        return Err(Error::data("no conditioning vectors"));
    }
    let s34 = stencil_tensor(&grids.c34, DELTA_M, DELTA_TAU);
    let s5 = stencil_tensor(&grids.c5, DELTA_M, DELTA_TAU);
    let mut sums = (0.0, 0.0, 0.0);
    for f in f_batch {
        let (c3, c4, c5) = penalty_sums_for_day(net, f, grids, &s34, &s5, DELTA_M, DELTA_TAU)?;
        sums.0 += c3;
        sums.1 += c4;
        sums.2 += c5;
    }
    let days = f_batch.len() as f64;
    let n34 = grids.c34.len().max(1) as f64;
    let n5 = grids.c5.len().max(1) as f64;
    Ok((
        sums.0 / (days * n34),
        sums.1 / (days * n34),
        sums.2 / (days * n5),
    ))
}

/// One training day: the conditioning vol set and the day's observed
/// quotes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructorDay {
    /// Conditioning vol set `F` (feature-decoded surface values).
    pub f: Vec<f64>,
    /// Observed quotes `(m, tau, vol)` the surface is fitted to.
    pub quotes: Vec<SurfacePoint>,
}

/// Loss components measured on a panel after an epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyValues {
    /// Mean squared quote error.
    pub l_s: f64,
    /// Calendar hinge average.
    pub l_c3: f64,
    /// Butterfly hinge average.
    pub l_c4: f64,
    /// Wing-growth average.
    pub l_c5: f64,
}

/// Per-epoch loss components on the training and test panels.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyReport {
    pub train: Vec<PenaltyValues>,
    /// Empty when no test panel was supplied.
    pub test: Vec<PenaltyValues>,
}

/// Training configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstructorConfig {
    pub train: TrainConfig,
    pub hidden: usize,
    /// Penalty weight; 0 trains an unconstrained fit.
    pub lambda: f64,
    pub grid: PenaltyGridConfig,
    pub delta_m: f64,
    pub delta_tau: f64,
}

impl Default for ConstructorConfig {
    /// 20 epochs, batch 1024, 50 hidden units, learning rate 0.001,
    /// penalty weight 1.
    fn default() -> Self {
        Self {
            train: TrainConfig::new(20, 1024, 0.001, 0),
            hidden: DEFAULT_HIDDEN,
            lambda: DEFAULT_LAMBDA,
            grid: PenaltyGridConfig::default(),
            delta_m: DELTA_M,
            delta_tau: DELTA_TAU,
        }
    }
}

impl ConstructorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::config(format!(
                "penalty weight must be nonnegative, got {}",
                self.lambda
            )));
        }
        if self.hidden == 0 {
            return Err(Error::config("hidden width must be positive"));
        }
        if !(self.delta_m > 0.0 && self.delta_tau > 0.0) {
            return Err(Error::config("stencil steps must be positive"));
        }
        self.grid.validate()?;
        self.train.validate()
    }
}

fn validate_days(days: &[ConstructorDay], feature_dim: usize) -> Result<()> {
    for (i, day) in days.iter().enumerate() {
        if day.f.len() != feature_dim {
            return Err(Error::shape(format!(
                "day {i}: {} conditioning values, expected {feature_dim}",
                day.f.len()
            )));
        }
        if day.quotes.is_empty() {
            return Err(Error::data(format!("day {i} has no quotes")));
        }
        if !day.f.iter().all(|v| v.is_finite()) {
            return Err(Error::data(format!("day {i}: non-finite conditioning value")));
        }
        for q in &day.quotes {
            if !(q.tau > 0.0) || !q.m.is_finite() || !(q.vol > 0.0) || !q.vol.is_finite() {
                return Err(Error::data(format!(
                    "day {i}: bad quote (m {}, tau {}, vol {})",
                    q.m, q.tau, q.vol
                )));
            }
        }
    }
    Ok(())
}

struct NetVars {
    norm: NormVars,
    layers: Vec<DenseVars>,
}

/// Everything one optimization step needs besides the parameters.
struct StepData<'a> {
    /// Quote inputs `[m, tau, F]`, one row per quote.
    x_quotes: Tensor,
    /// Quote vols, one row each.
    y_quotes: Tensor,
    /// Distinct conditioning vectors of the batch.
    day_features: Vec<&'a [f64]>,
    /// Batch-normalization constants of the step.
    scale: Vec<f64>,
    mean: Vec<f64>,
    stencil34: &'a Tensor,
    stencil5: &'a Tensor,
    /// Per-node coordinates of the dense grid, aligned with its stencil.
    m34: &'a [f64],
    tau34: &'a [f64],
    n34: usize,
    n5: usize,
    lambda: f64,
    dm: f64,
    dt: f64,
}

/// Handles shared by every day's probe evaluation in one step: the folded
/// normalization coefficients and the split first-layer weights.
struct FoldedFirstLayer {
    g_mt: Var,
    g_f: Var,
    s_w1: Var,
    w1_mt: Var,
    w1_f: Var,
}

/// First-layer evaluation over stencil rows with the batch-norm affine
/// folded in: the conditioning part collapses to one row per day.
fn day_stencil_output(
    tape: &mut Tape,
    net: &SurfaceNet,
    vars: &NetVars,
    folded: &FoldedFirstLayer,
    f: &[f64],
    stencil: Var,
) -> Result<Var> {
    let first = &vars.layers[0];
    let fg = tape.mul_const(folded.g_f, f)?;
    let proj = tape.matmul(fg, folded.w1_f)?;
    let proj = tape.add(proj, folded.s_w1)?;
    let proj = tape.add(proj, first.b)?;
    let mts = tape.mul_row(stencil, folded.g_mt)?;
    let z = tape.matmul(mts, folded.w1_mt)?;
    let z = tape.add_row(z, proj)?;
    let mut h = tape.activation(z, net.net.layers[0].act);
    for (layer, v) in net.net.layers[1..].iter().zip(&vars.layers[1..]) {
        let z = tape.matmul(h, v.w)?;
        let z = tape.add_row(z, v.b)?;
        h = tape.activation(z, layer.act);
    }
    Ok(h)
}

/// Builds the penalized batch loss on the tape. Returns the total loss and
/// the quote-error component.
fn step_loss(
    tape: &mut Tape,
    net: &SurfaceNet,
    vars: &NetVars,
    data: &StepData,
) -> Result<(Var, Var)> {
    // Quote pass: normalized inputs through the full network.
    let shift: Vec<f64> = data
        .mean
        .iter()
        .zip(&data.scale)
        .map(|(&m, &a)| -m * a)
        .collect();
    let xq = tape.leaf(data.x_quotes.clone());
    let xq = tape.affine_cols(xq, &data.scale, &shift)?;
    let xq = tape.mul_row(xq, vars.norm.gamma)?;
    let xq = tape.add_row(xq, vars.norm.beta)?;
    let pred = net.net.forward(tape, &vars.layers, xq)?;
    let yq = tape.leaf(data.y_quotes.clone());
    let resid = tape.sub(pred, yq)?;
    let sq = tape.square(resid);
    let l_s = tape.mean_all(sq);

    if data.lambda == 0.0 || (data.n34 == 0 && data.n5 == 0) {
        return Ok((l_s, l_s));
    }

    // Folded norm coefficients shared by every day's probe evaluation.
    let g = tape.mul_const(vars.norm.gamma, &data.scale)?;
    let gm_shift = tape.mul_const(g, &data.mean)?;
    let s = tape.sub(vars.norm.beta, gm_shift)?;
    let folded = FoldedFirstLayer {
        g_mt: tape.slice_cols(g, 0, 2)?,
        g_f: tape.slice_cols(g, 2, data.mean.len() - 2)?,
        s_w1: tape.matmul(s, vars.layers[0].w)?,
        w1_mt: tape.slice_rows(vars.layers[0].w, 0, 2)?,
        w1_f: tape.slice_rows(vars.layers[0].w, 2, data.mean.len() - 2)?,
    };
    let s34_leaf = if data.n34 > 0 {
        Some(tape.leaf(data.stencil34.clone()))
    } else {
        None
    };
    let s5_leaf = if data.n5 > 0 {
        Some(tape.leaf(data.stencil5.clone()))
    } else {
        None
    };

    let mut c3_sum: Option<Var> = None;
    let mut c4_sum: Option<Var> = None;
    let mut c5_sum: Option<Var> = None;
    let fold = |tape: &mut Tape, acc: &mut Option<Var>, v: Var| -> Result<()> {
        *acc = Some(match *acc {
            Some(a) => tape.add(a, v)?,
            None => v,
        });
        Ok(())
    };
    for f in &data.day_features {
        if let Some(stencil) = s34_leaf {
            let out = day_stencil_output(tape, net, vars, &folded, f, stencil)?;
            let n = data.n34;
            let f0 = tape.slice_rows(out, 0, n)?;
            let fmp = tape.slice_rows(out, n, n)?;
            let fmm = tape.slice_rows(out, 2 * n, n)?;
            let ftp = tape.slice_rows(out, 3 * n, n)?;
            let ftm = tape.slice_rows(out, 4 * n, n)?;
            let dmd = tape.sub(fmp, fmm)?;
            let d_m = tape.scale(dmd, 1.0 / (2.0 * data.dm));
            let twice = tape.scale(f0, 2.0);
            let curv = tape.add(fmp, fmm)?;
            let curv = tape.sub(curv, twice)?;
            let d_mm = tape.scale(curv, 1.0 / (data.dm * data.dm));
            let dtd = tape.sub(ftp, ftm)?;
            let d_t = tape.scale(dtd, 1.0 / (2.0 * data.dt));

            // Calendar: vol + 2 tau d_tau, hinged on its negative part.
            let tdt = tape.mul_const(d_t, data.tau34)?;
            let cal = tape.scale(tdt, 2.0);
            let cal = tape.add(f0, cal)?;
            let neg = tape.scale(cal, -1.0);
            let hinge = tape.activation(neg, ActKind::Relu);
            let c3 = tape.mean_all(hinge);
            fold(tape, &mut c3_sum, c3)?;

            // Butterfly: (1 - m d_m / vol)^2 - (vol tau d_m)^2 / 4
            //            + tau vol d_mm, hinged on its negative part.
            let mdm = tape.mul_const(d_m, data.m34)?;
            let ratio = tape.div(mdm, f0)?;
            let gterm = tape.scale(ratio, -1.0);
            let gterm = tape.shift(gterm, 1.0);
            let g2 = tape.square(gterm);
            let vdm = tape.mul(f0, d_m)?;
            let vtdm = tape.mul_const(vdm, data.tau34)?;
            let b2 = tape.square(vtdm);
            let b2 = tape.scale(b2, 0.25);
            let vdmm = tape.mul(f0, d_mm)?;
            let tvdmm = tape.mul_const(vdmm, data.tau34)?;
            let but = tape.sub(g2, b2)?;
            let but = tape.add(but, tvdmm)?;
            let neg = tape.scale(but, -1.0);
            let hinge = tape.activation(neg, ActKind::Relu);
            let c4 = tape.mean_all(hinge);
            fold(tape, &mut c4_sum, c4)?;
        }
        if let Some(stencil) = s5_leaf {
            let out = day_stencil_output(tape, net, vars, &folded, f, stencil)?;
            let n = data.n5;
            let f0 = tape.slice_rows(out, 0, n)?;
            let fmp = tape.slice_rows(out, n, n)?;
            let fmm = tape.slice_rows(out, 2 * n, n)?;
            let dmd = tape.sub(fmp, fmm)?;
            let d_m = tape.scale(dmd, 1.0 / (2.0 * data.dm));
            let twice = tape.scale(f0, 2.0);
            let curv = tape.add(fmp, fmm)?;
            let curv = tape.sub(curv, twice)?;
            let d_mm = tape.scale(curv, 1.0 / (data.dm * data.dm));
            let vd = tape.mul(f0, d_mm)?;
            let dm2 = tape.square(d_m);
            let wing = tape.add(vd, dm2)?;
            let wing = tape.abs(wing);
            let c5 = tape.mean_all(wing);
            fold(tape, &mut c5_sum, c5)?;
        }
    }

    let days = data.day_features.len() as f64;
    let mut total = l_s;
    for sum in [c3_sum, c4_sum, c5_sum].into_iter().flatten() {
        let avg = tape.scale(sum, data.lambda / days);
        total = tape.add(total, avg)?;
    }
    Ok((total, l_s))
}

fn report_values(
    net: &SurfaceNet,
    days: &[ConstructorDay],
    grids: &PenaltyGrids,
    s34: &Tensor,
    s5: &Tensor,
    dm: f64,
    dt: f64,
) -> Result<PenaltyValues> {
    let mut sq = 0.0;
    let mut nq = 0usize;
    let mut sums = (0.0, 0.0, 0.0);
    for day in days {
        let mut mt = Tensor::zeros(day.quotes.len(), 2);
        for (r, q) in day.quotes.iter().enumerate() {
            mt.values[2 * r] = q.m;
            mt.values[2 * r + 1] = q.tau;
        }
        let pred = eval_day_outputs(net, &mt, &day.f)?;
        for (p, q) in pred.values.iter().zip(&day.quotes) {
            sq += (p - q.vol) * (p - q.vol);
        }
        nq += day.quotes.len();
        let (c3, c4, c5) = penalty_sums_for_day(net, &day.f, grids, s34, s5, dm, dt)?;
        sums.0 += c3;
        sums.1 += c4;
        sums.2 += c5;
    }
    let d = days.len() as f64;
    Ok(PenaltyValues {
        l_s: sq / nq as f64,
        l_c3: sums.0 / (d * grids.c34.len().max(1) as f64),
        l_c4: sums.1 / (d * grids.c34.len().max(1) as f64),
        l_c5: sums.2 / (d * grids.c5.len().max(1) as f64),
    })
}

/// Trains the surface network on a quote panel with the arbitrage
/// penalties. Minibatch rows are (day, quote) pairs taken in day-contiguous
/// slabs of a seeded day shuffle; each batch's penalties are evaluated on
/// the conditioning vectors of the days present in that batch. After every
/// epoch the loss components are measured on the full training panel and,
/// when supplied, the test panel.
pub fn train_constructor(
    train_days: &[ConstructorDay],
    test_days: &[ConstructorDay],
    config: &ConstructorConfig,
) -> Result<(SurfaceNet, PenaltyReport)> {
    config.validate()?;
    if train_days.is_empty() {
        return Err(Error::data("no training days"));
    }
    let feature_dim = train_days[0].f.len();
    validate_days(train_days, feature_dim)?;
    validate_days(test_days, feature_dim)?;
    let grids = build_penalty_grids(&config.grid)?;
    let (dm, dt) = (config.delta_m, config.delta_tau);
    let s34 = stencil_tensor(&grids.c34, dm, dt);
    let s5 = stencil_tensor(&grids.c5, dm, dt);
    let m34: Vec<f64> = grids.c34.iter().map(|&(m, _)| m).collect();
    let tau34: Vec<f64> = grids.c34.iter().map(|&(_, t)| t).collect();

    let mut rng = ChaCha12Rng::seed_from_u64(config.train.seed);
    let mut net = SurfaceNet::new(feature_dim, config.hidden, &mut rng)?;
    let mut adam = Adam::new(&config.train);
    let mut report = PenaltyReport {
        train: Vec::with_capacity(config.train.epochs),
        test: Vec::new(),
    };

    for epoch in 0..config.train.epochs {
        let day_order = shuffled_indices(train_days.len(), &mut rng);
        let rows: Vec<(usize, usize)> = day_order
            .iter()
            .flat_map(|&d| (0..train_days[d].quotes.len()).map(move |q| (d, q)))
            .collect();
        for batch in rows.chunks(config.train.batch_size) {
            let nb = batch.len();
            let mut x_quotes = Tensor::zeros(nb, feature_dim + 2);
            let mut y_quotes = Tensor::zeros(nb, 1);
            let mut batch_days: Vec<usize> = Vec::new();
            for (r, &(d, qi)) in batch.iter().enumerate() {
                let day = &train_days[d];
                let q = &day.quotes[qi];
                let seg = &mut x_quotes.values[r * (feature_dim + 2)..];
                seg[0] = q.m;
                seg[1] = q.tau;
                seg[2..2 + feature_dim].copy_from_slice(&day.f);
                y_quotes.values[r] = q.vol;
                if batch_days.last() != Some(&d) {
                    batch_days.push(d);
                }
            }

            let (scale, mean) = net.norm.fold(&x_quotes, true)?;
            let mut tape = Tape::new();
            let vars = NetVars {
                norm: net.norm.attach(&mut tape),
                layers: net.net.attach(&mut tape),
            };
            let data = StepData {
                x_quotes,
                y_quotes,
                day_features: batch_days.iter().map(|&d| &train_days[d].f[..]).collect(),
                scale,
                mean,
                stencil34: &s34,
                stencil5: &s5,
                m34: &m34,
                tau34: &tau34,
                n34: grids.c34.len(),
                n5: grids.c5.len(),
                lambda: config.lambda,
                dm,
                dt,
            };
            let (total, _) = step_loss(&mut tape, &net, &vars, &data)?;
            let total_v = tape.value(total).values[0];
            if !total_v.is_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}: loss {total_v}")));
            }
            let grads = tape.backward(total)?;
            let mut grad_slices: Vec<&[f64]> = vec![
                grads.of(vars.norm.gamma)?,
                grads.of(vars.norm.beta)?,
            ];
            grad_slices.extend(Mlp::grads(&vars.layers, &grads)?);
            let mut param_slices: Vec<&mut [f64]> = Vec::new();
            param_slices.extend(net.norm.params_mut());
            param_slices.extend(net.net.params_mut());
            let mut updates: Vec<(&mut [f64], &[f64])> =
                param_slices.into_iter().zip(grad_slices).collect();
            adam.step(&mut updates, config.train.learning_rate)?;
        }

        report
            .train
            .push(report_values(&net, train_days, &grids, &s34, &s5, dm, dt)?);
        if !test_days.is_empty() {
            report
                .test
                .push(report_values(&net, test_days, &grids, &s34, &s5, dm, dt)?);
        }
    }
    Ok((net, report))
}
