//! Layers: dense stacks, input batch normalization, and the LSTM cell.
//!
//! Parameters live outside any tape, in plain tensors. Each training step
//! attaches them to a fresh tape as leaves (`attach`), builds the forward
//! graph, and after `backward` feeds the gradients to Adam in the same
//! fixed order. Inference paths (`eval`) skip the tape entirely.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::math::uniform_open01;

use super::optim::Adam;
use super::tape::{ActKind, Gradients, Tape, Var};
use super::tensor::{matmul_into, Tensor};

/// Xavier initialization: entries i.i.d. uniform on
/// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
pub fn xavier_init<R: RngCore + ?Sized>(
    fan_in: usize,
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> Tensor {
    assert!(fan_in >= 1, "xavier_init requires fan_in >= 1");
    let bound = 1.0 / (fan_in as f64).sqrt();
    let values = (0..rows * cols)
        .map(|_| (2.0 * uniform_open01(rng) - 1.0) * bound)
        .collect();
    Tensor { rows, cols, values }
}

/// A dense layer `act(x W + b)` with Xavier-initialized weights and zero
/// biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Tensor,
    pub b: Tensor,
    pub act: ActKind,
}

/// Tape handles for one dense layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct DenseVars {
    pub w: Var,
    pub b: Var,
}

impl Dense {
    pub fn new<R: RngCore + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        act: ActKind,
        rng: &mut R,
    ) -> Self {
        Self {
            w: xavier_init(fan_in, fan_in, fan_out, rng),
            b: Tensor::zeros(1, fan_out),
            act,
        }
    }

    pub fn attach(&self, tape: &mut Tape) -> DenseVars {
        DenseVars {
            w: tape.leaf(self.w.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }

    pub fn forward(&self, tape: &mut Tape, vars: DenseVars, x: Var) -> Result<Var> {
        let z = tape.matmul(x, vars.w)?;
        let z = tape.add_row(z, vars.b)?;
        Ok(tape.activation(z, self.act))
    }

    /// Tape-free inference.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols != self.w.rows {
            return Err(Error::shape(format!(
                "dense eval: input {}x{} against weights {}x{}",
                x.rows, x.cols, self.w.rows, self.w.cols
            )));
        }
        let mut out = Tensor::zeros(x.rows, self.w.cols);
        matmul_into(&mut out.values, &x.values, &self.w.values, x.rows, x.cols, self.w.cols);
        for r in 0..out.rows {
            let seg = &mut out.values[r * out.cols..(r + 1) * out.cols];
            for (v, &b) in seg.iter_mut().zip(&self.b.values) {
                *v = self.act.apply(*v + b);
            }
        }
        Ok(out)
    }
}

/// A stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// `dims` are layer widths (input first), `acts` one activation per
    /// transition.
    pub fn new<R: RngCore + ?Sized>(dims: &[usize], acts: &[ActKind], rng: &mut R) -> Result<Self> {
        if dims.len() != acts.len() + 1 || dims.is_empty() {
            return Err(Error::config(format!(
                "mlp: {} widths need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                acts.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(acts)
            .map(|(d, &act)| Dense::new(d[0], d[1], act, rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn attach(&self, tape: &mut Tape) -> Vec<DenseVars> {
        self.layers.iter().map(|l| l.attach(tape)).collect()
    }

    pub fn forward(&self, tape: &mut Tape, vars: &[DenseVars], mut x: Var) -> Result<Var> {
        for (layer, &v) in self.layers.iter().zip(vars) {
            x = layer.forward(tape, v, x)?;
        }
        Ok(x)
    }

    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = self.layers[0].eval(x)?;
        for layer in &self.layers[1..] {
            out = layer.eval(&out)?;
        }
        Ok(out)
    }

    /// Parameter slices in attach order (w, b per layer), for Adam.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.w.values[..], &mut l.b.values[..]])
            .collect()
    }

    /// Gradient slices in attach order.
    pub fn grads<'g>(vars: &[DenseVars], grads: &'g Gradients) -> Result<Vec<&'g [f64]>> {
        let mut out = Vec::with_capacity(vars.len() * 2);
        for v in vars {
            out.push(grads.of(v.w)?);
            out.push(grads.of(v.b)?);
        }
        Ok(out)
    }

    /// Applies one Adam update from a finished backward pass.
    pub fn adam_update(
        &mut self,
        vars: &[DenseVars],
        grads: &Gradients,
        adam: &mut Adam,
        lr: f64,
    ) -> Result<()> {
        let gs = Self::grads(vars, grads)?;
        let mut updates: Vec<(&mut [f64], &[f64])> =
            self.params_mut().into_iter().zip(gs).collect();
        adam.step(&mut updates, lr)
    }
}

/// Batch normalization for network inputs. In train mode each batch is
/// standardized by its own per-column statistics (treated as constants of
/// the step; gradients do not flow through them) and the running statistics
/// are updated; in eval mode the stored running statistics make the layer a
/// fixed affine map. A trainable per-column scale and shift follow the
/// standardization.
#[derive(Debug, Clone, PartialEq)]
pub struct InputNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
}

/// Tape handles for the trainable scale and shift.
#[derive(Debug, Clone, Copy)]
pub struct NormVars {
    pub gamma: Var,
    pub beta: Var,
}

impl InputNorm {
    pub fn new(dim: usize) -> Self {
        Self {
            gamma: Tensor::row(vec![1.0; dim]),
            beta: Tensor::zeros(1, dim),
            running_mean: vec![0.0; dim],
            running_var: vec![1.0; dim],
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.cols
    }

    /// Per-column mean and (biased) variance of a batch.
    pub fn batch_stats(batch: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let (n, c) = (batch.rows, batch.cols);
        let mut mean = vec![0.0; c];
        for r in 0..n {
            for (m, &v) in mean.iter_mut().zip(&batch.values[r * c..(r + 1) * c]) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut var = vec![0.0; c];
        for r in 0..n {
            for ((s, &v), &m) in var.iter_mut().zip(&batch.values[r * c..(r + 1) * c]).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        for s in &mut var {
            *s /= n as f64;
        }
        (mean, var)
    }

    /// Standardization constants `(scale, mean)` for this step: batch
    /// statistics in train mode (updating the running ones), running
    /// statistics otherwise.
    pub fn fold(&mut self, batch: &Tensor, train: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        if batch.cols != self.dim() {
            return Err(Error::shape(format!(
                "input norm over {} columns applied to {}",
                self.dim(),
                batch.cols
            )));
        }
        let (mean, var) = if train {
            let (mean, var) = Self::batch_stats(batch);
            for (r, &b) in self.running_mean.iter_mut().zip(&mean) {
                *r = (1.0 - self.momentum) * *r + self.momentum * b;
            }
            for (r, &b) in self.running_var.iter_mut().zip(&var) {
                *r = (1.0 - self.momentum) * *r + self.momentum * b;
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };
        let scale = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        Ok((scale, mean))
    }

    pub fn attach(&self, tape: &mut Tape) -> NormVars {
        NormVars {
            gamma: tape.leaf(self.gamma.clone()),
            beta: tape.leaf(self.beta.clone()),
        }
    }

    pub fn forward(
        &mut self,
        tape: &mut Tape,
        vars: NormVars,
        x: Var,
        train: bool,
    ) -> Result<Var> {
        let (scale, mean) = {
            let batch = tape.value(x).clone();
            self.fold(&batch, train)?
        };
        let shift: Vec<f64> = mean.iter().zip(&scale).map(|(&m, &a)| -m * a).collect();
        let y = tape.affine_cols(x, &scale, &shift)?;
        let y = tape.mul_row(y, vars.gamma)?;
        tape.add_row(y, vars.beta)
    }

    /// The eval-mode affine coefficients `(a, b)` with `y = a .* x + b`
    /// per column, folding running statistics, scale, and shift.
    pub fn eval_affine(&self) -> (Vec<f64>, Vec<f64>) {
        let mut a = Vec::with_capacity(self.dim());
        let mut b = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let s = self.gamma.values[k] / (self.running_var[k] + self.eps).sqrt();
            a.push(s);
            b.push(self.beta.values[k] - self.running_mean[k] * s);
        }
        (a, b)
    }

    /// Tape-free eval-mode application.
    pub fn apply_eval(&self, x: &Tensor) -> Result<Tensor> {
        if x.cols != self.dim() {
            return Err(Error::shape(format!(
                "input norm over {} columns applied to {}",
                self.dim(),
                x.cols
            )));
        }
        let (a, b) = self.eval_affine();
        let mut out = x.clone();
        for r in 0..out.rows {
            let seg = &mut out.values[r * out.cols..(r + 1) * out.cols];
            for ((v, &s), &t) in seg.iter_mut().zip(&a).zip(&b) {
                *v = *v * s + t;
            }
        }
        Ok(out)
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.gamma.values, &mut self.beta.values]
    }
}

/// One LSTM cell. Gate weights are stored as column blocks
/// `[forget | input | candidate | output]` of `wx` (input-to-gates) and
/// `wh` (hidden-to-gates), with a shared bias row.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub wx: Tensor,
    pub wh: Tensor,
    pub b: Tensor,
    pub hidden: usize,
}

/// Tape handles for the cell parameters.
#[derive(Debug, Clone, Copy)]
pub struct LstmVars {
    pub wx: Var,
    pub wh: Var,
    pub b: Var,
}

impl LstmCell {
    pub fn new<R: RngCore + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            wx: xavier_init(input, input, 4 * hidden, rng),
            wh: xavier_init(hidden, hidden, 4 * hidden, rng),
            b: Tensor::zeros(1, 4 * hidden),
            hidden,
        }
    }

    pub fn attach(&self, tape: &mut Tape) -> LstmVars {
        LstmVars {
            wx: tape.leaf(self.wx.clone()),
            wh: tape.leaf(self.wh.clone()),
            b: tape.leaf(self.b.clone()),
        }
    }

    /// One recurrence step: given input rows `x` and previous `(h, c)`,
    /// produces the next `(h, c)`.
    ///
    /// ```text
    /// f = sigm(zf)   i = sigm(zi)   g = tanh(zg)   o = sigm(zo)
    /// c' = f .* c + i .* g          h' = o .* tanh(c')
    /// ```
    pub fn step(
        &self,
        tape: &mut Tape,
        vars: LstmVars,
        x: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let zx = tape.matmul(x, vars.wx)?;
        let zh = tape.matmul(h, vars.wh)?;
        let z = tape.add(zx, zh)?;
        let z = tape.add_row(z, vars.b)?;
        let hd = self.hidden;
        let zf = tape.slice_cols(z, 0, hd)?;
        let zi = tape.slice_cols(z, hd, hd)?;
        let zg = tape.slice_cols(z, 2 * hd, hd)?;
        let zo = tape.slice_cols(z, 3 * hd, hd)?;
        let f = tape.activation(zf, ActKind::Sigmoid);
        let i = tape.activation(zi, ActKind::Sigmoid);
        let g = tape.activation(zg, ActKind::Tanh);
        let o = tape.activation(zo, ActKind::Sigmoid);
        let fc = tape.mul(f, c)?;
        let ig = tape.mul(i, g)?;
        let c_next = tape.add(fc, ig)?;
        let tc = tape.activation(c_next, ActKind::Tanh);
        let h_next = tape.mul(o, tc)?;
        Ok((h_next, c_next))
    }

    /// Tape-free recurrence step (same map as [`Self::step`]).
    pub fn eval_step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let hd = self.hidden;
        if x.cols != self.wx.rows || h.cols != hd || c.cols != hd || x.rows != h.rows
            || h.rows != c.rows
        {
            return Err(Error::shape(format!(
                "lstm eval: x {}x{}, h {}x{}, c {}x{} against input {} hidden {hd}",
                x.rows, x.cols, h.rows, h.cols, c.rows, c.cols, self.wx.rows
            )));
        }
        let n = x.rows;
        let mut z = Tensor::zeros(n, 4 * hd);
        matmul_into(&mut z.values, &x.values, &self.wx.values, n, x.cols, 4 * hd);
        matmul_into(&mut z.values, &h.values, &self.wh.values, n, hd, 4 * hd);
        let mut h_next = Tensor::zeros(n, hd);
        let mut c_next = Tensor::zeros(n, hd);
        for r in 0..n {
            let row = &mut z.values[r * 4 * hd..(r + 1) * 4 * hd];
            for (v, &b) in row.iter_mut().zip(&self.b.values) {
                *v += b;
            }
            for k in 0..hd {
                let f = super::tape::sigmoid(row[k]);
                let i = super::tape::sigmoid(row[hd + k]);
                let g = row[2 * hd + k].tanh();
                let o = super::tape::sigmoid(row[3 * hd + k]);
                let cn = f * c.values[r * hd + k] + i * g;
                c_next.values[r * hd + k] = cn;
                h_next.values[r * hd + k] = o * cn.tanh();
            }
        }
        Ok((h_next, c_next))
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 3] {
        [
            &mut self.wx.values,
            &mut self.wh.values,
            &mut self.b.values,
        ]
    }

    pub fn grads<'g>(vars: LstmVars, grads: &'g Gradients) -> Result<[&'g [f64]; 3]> {
        Ok([grads.of(vars.wx)?, grads.of(vars.wh)?, grads.of(vars.b)?])
    }
}
