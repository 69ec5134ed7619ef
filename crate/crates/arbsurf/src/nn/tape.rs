//! Reverse-mode automatic differentiation on a tape of tensor operations.
//!
//! Each training step builds a fresh graph: parameters enter as trainable
//! leaves, data as constants, and every operation records its parents.
//! `backward` walks the tape once in reverse, accumulating gradients at
//! tensor granularity, so a node's whole backward step is a matrix kernel
//! rather than per-element bookkeeping. Querying the gradient of a node the
//! loss does not depend on is an error (a detached parameter is a bug in the
//! caller's graph, not a zero).

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::tensor::{matmul_into, Tensor};

/// Elementwise activation kinds, shared by layers and serialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActKind {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
    Softplus,
    Exp,
}

impl ActKind {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActKind::Identity => x,
            ActKind::Sigmoid => sigmoid(x),
            ActKind::Tanh => x.tanh(),
            ActKind::Relu => x.max(0.0),
            ActKind::Softplus => softplus(x),
            ActKind::Exp => x.exp(),
        }
    }

    /// Derivative expressed from input `x` and output `y = apply(x)`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            ActKind::Identity => 1.0,
            ActKind::Sigmoid => y * (1.0 - y),
            ActKind::Tanh => 1.0 - y * y,
            ActKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActKind::Softplus => sigmoid(x),
            ActKind::Exp => y,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            ActKind::Identity => 0,
            ActKind::Sigmoid => 1,
            ActKind::Tanh => 2,
            ActKind::Relu => 3,
            ActKind::Softplus => 4,
            ActKind::Exp => 5,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => ActKind::Identity,
            1 => ActKind::Sigmoid,
            2 => ActKind::Tanh,
            3 => ActKind::Relu,
            4 => ActKind::Softplus,
            5 => ActKind::Exp,
            other => return Err(Error::format(format!("unknown activation code {other}"))),
        })
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    MatMul(Var, Var),
    /// Row-broadcast add: matrix plus a 1-by-c row.
    AddRow(Var, Var),
    /// Row-broadcast multiply: matrix times a 1-by-c row.
    MulRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Shift(Var),
    /// Elementwise multiply by a constant tensor of the same shape.
    MulConst(Var, Vec<f64>),
    /// Per-column affine with constant coefficients: `y[i,j] = x[i,j]*a[j] + d[j]`.
    AffineCols(Var, Vec<f64>),
    Act(Var, ActKind),
    Square(Var),
    Abs(Var),
    ClampMin(Var, f64),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    ConcatRows(Vec<Var>),
    SumAll(Var),
    MeanAll(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients produced by one backward pass, indexed by `Var`.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`.
    ///
    /// # Errors
    /// `Error::Fit` if the loss does not depend on `v` (detached parameter).
    pub fn of(&self, v: Var) -> Result<&[f64]> {
        self.grads
            .get(v.0)
            .and_then(|g| g.as_deref())
            .ok_or_else(|| {
                Error::fit(format!(
                    "missing gradient: node {} is not reachable from the loss",
                    v.0
                ))
            })
    }
}

/// A computation tape. Build the graph through the methods below, then call
/// [`Tape::backward`] on a scalar loss node.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Registers a tensor (parameter or data) as a graph leaf.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    fn binary_shapes(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let (ta, tb) = (self.value(a), self.value(b));
        if !ta.same_shape(tb) {
            return Err(Error::shape(format!(
                "{what}: {}x{} with {}x{}",
                ta.rows, ta.cols, tb.rows, tb.cols
            )));
        }
        Ok((ta.rows, ta.cols))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols != tb.rows {
            return Err(Error::shape(format!(
                "matmul: {}x{} with {}x{}",
                ta.rows, ta.cols, tb.rows, tb.cols
            )));
        }
        let mut out = Tensor::zeros(ta.rows, tb.cols);
        matmul_into(&mut out.values, &ta.values, &tb.values, ta.rows, ta.cols, tb.cols);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.row_broadcast(x, row, "add_row", |a, b| a + b)?;
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.row_broadcast(x, row, "mul_row", |a, b| a * b)?;
        Ok(self.push(value, Op::MulRow(x, row)))
    }

    fn row_broadcast(
        &self,
        x: Var,
        row: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (tx, tr) = (self.value(x), self.value(row));
        if tr.rows != 1 || tr.cols != tx.cols {
            return Err(Error::shape(format!(
                "{what}: {}x{} with row {}x{}",
                tx.rows, tx.cols, tr.rows, tr.cols
            )));
        }
        let mut out = tx.clone();
        for r in 0..out.rows {
            let seg = &mut out.values[r * out.cols..(r + 1) * out.cols];
            for (o, &v) in seg.iter_mut().zip(&tr.values) {
                *o = f(*o, v);
            }
        }
        Ok(out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "add")?;
        let value = self.zip(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "sub")?;
        let value = self.zip(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "mul")?;
        let value = self.zip(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary_shapes(a, b, "div")?;
        let value = self.zip(a, b, |x, y| x / y);
        Ok(self.push(value, Op::Div(a, b)))
    }

    fn zip(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let values = ta
            .values
            .iter()
            .zip(&tb.values)
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor {
            rows: ta.rows,
            cols: ta.cols,
            values,
        }
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let tx = self.value(x);
        let value = Tensor {
            rows: tx.rows,
            cols: tx.cols,
            values: tx.values.iter().map(|&v| f(v)).collect(),
        };
        self.push(value, op)
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v * s, Op::Scale(x, s))
    }

    pub fn shift(&mut self, x: Var, s: f64) -> Var {
        self.unary(x, |v| v + s, Op::Shift(x))
    }

    /// Elementwise multiply by a constant tensor (no gradient into it).
    pub fn mul_const(&mut self, x: Var, consts: &[f64]) -> Result<Var> {
        let tx = self.value(x);
        if consts.len() != tx.len() {
            return Err(Error::shape(format!(
                "mul_const: {} constants for {} values",
                consts.len(),
                tx.len()
            )));
        }
        let value = Tensor {
            rows: tx.rows,
            cols: tx.cols,
            values: tx.values.iter().zip(consts).map(|(&v, &c)| v * c).collect(),
        };
        let consts = consts.to_vec();
        Ok(self.push(value, Op::MulConst(x, consts)))
    }

    /// Per-column affine with constant coefficients: `y = x .* a + d`
    /// column-wise. Used for normalization whose statistics are treated as
    /// constants of the step.
    pub fn affine_cols(&mut self, x: Var, a: &[f64], d: &[f64]) -> Result<Var> {
        let tx = self.value(x);
        if a.len() != tx.cols || d.len() != tx.cols {
            return Err(Error::shape(format!(
                "affine_cols: {} scales / {} shifts for {} columns",
                a.len(),
                d.len(),
                tx.cols
            )));
        }
        let mut value = tx.clone();
        for r in 0..value.rows {
            let seg = &mut value.values[r * value.cols..(r + 1) * value.cols];
            for ((v, &s), &t) in seg.iter_mut().zip(a).zip(d) {
                *v = *v * s + t;
            }
        }
        Ok(self.push(value, Op::AffineCols(x, a.to_vec())))
    }

    pub fn activation(&mut self, x: Var, kind: ActKind) -> Var {
        if kind == ActKind::Identity {
            return x;
        }
        self.unary(x, |v| kind.apply(v), Op::Act(x, kind))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.abs(), Op::Abs(x))
    }

    /// `max(x, floor)` elementwise; gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: Var, floor: f64) -> Var {
        self.unary(x, |v| v.max(floor), Op::ClampMin(x, floor))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.rows {
            return Err(Error::shape(format!(
                "slice_rows: rows {start}..{} of a {}-row tensor",
                start + len,
                tx.rows
            )));
        }
        let value = Tensor {
            rows: len,
            cols: tx.cols,
            values: tx.values[start * tx.cols..(start + len) * tx.cols].to_vec(),
        };
        Ok(self.push(value, Op::SliceRows(x, start)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let tx = self.value(x);
        if start + len > tx.cols {
            return Err(Error::shape(format!(
                "slice_cols: cols {start}..{} of a {}-column tensor",
                start + len,
                tx.cols
            )));
        }
        let mut value = Tensor::zeros(tx.rows, len);
        for r in 0..tx.rows {
            let src = &tx.values[r * tx.cols + start..r * tx.cols + start + len];
            value.values[r * len..(r + 1) * len].copy_from_slice(src);
        }
        Ok(self.push(value, Op::SliceCols(x, start)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::shape("concat_rows: no parts"));
        };
        let cols = self.value(first).cols;
        let mut rows = 0;
        for &p in parts {
            let t = self.value(p);
            if t.cols != cols {
                return Err(Error::shape(format!(
                    "concat_rows: {} columns with {}",
                    t.cols, cols
                )));
            }
            rows += t.rows;
        }
        let mut values = Vec::with_capacity(rows * cols);
        for &p in parts {
            values.extend_from_slice(&self.value(p).values);
        }
        Ok(self.push(
            Tensor { rows, cols, values },
            Op::ConcatRows(parts.to_vec()),
        ))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).values.iter().sum();
        self.push(Tensor::row(vec![s]), Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s: f64 = t.values.iter().sum();
        let n = t.len() as f64;
        self.push(Tensor::row(vec![s / n]), Op::MeanAll(x))
    }

    /// Reverse pass from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            let t = self.value(loss);
            return Err(Error::shape(format!(
                "backward requires a scalar loss, got {}x{}",
                t.rows, t.cols
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            self.accumulate(idx, &gout, &mut grads);
            grads[idx] = Some(gout);
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(
        grads: &'a mut [Option<Vec<f64>>],
        v: Var,
        len: usize,
    ) -> &'a mut Vec<f64> {
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn accumulate(&self, idx: usize, gout: &[f64], grads: &mut [Option<Vec<f64>>]) {
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (r, k, c) = (ta.rows, ta.cols, tb.cols);
                // dA += dC * B^T
                {
                    let ga = Self::slot(grads, *a, r * k);
                    for i in 0..r {
                        let grow = &gout[i * c..(i + 1) * c];
                        let garow = &mut ga[i * k..(i + 1) * k];
                        for (p, gslot) in garow.iter_mut().enumerate() {
                            let brow = &tb.values[p * c..(p + 1) * c];
                            let mut acc = 0.0;
                            for (g, bv) in grow.iter().zip(brow) {
                                acc += g * bv;
                            }
                            *gslot += acc;
                        }
                    }
                }
                // dB += A^T * dC
                {
                    let gb = Self::slot(grads, *b, k * c);
                    for i in 0..r {
                        let arow = &ta.values[i * k..(i + 1) * k];
                        let grow = &gout[i * c..(i + 1) * c];
                        for (p, &av) in arow.iter().enumerate() {
                            let gbrow = &mut gb[p * c..(p + 1) * c];
                            for (gb_slot, &gv) in gbrow.iter_mut().zip(grow) {
                                *gb_slot += av * gv;
                            }
                        }
                    }
                }
            }
            Op::AddRow(x, row) => {
                let tx = self.value(*x);
                let (r, c) = (tx.rows, tx.cols);
                {
                    let gx = Self::slot(grads, *x, r * c);
                    for (g, &v) in gx.iter_mut().zip(gout) {
                        *g += v;
                    }
                }
                let gr = Self::slot(grads, *row, c);
                for i in 0..r {
                    for (g, &v) in gr.iter_mut().zip(&gout[i * c..(i + 1) * c]) {
                        *g += v;
                    }
                }
            }
            Op::MulRow(x, row) => {
                let tx = self.value(*x);
                let trow = &self.value(*row).values;
                let (r, c) = (tx.rows, tx.cols);
                {
                    let gx = Self::slot(grads, *x, r * c);
                    for i in 0..r {
                        let seg = &mut gx[i * c..(i + 1) * c];
                        for ((g, &v), &w) in
                            seg.iter_mut().zip(&gout[i * c..(i + 1) * c]).zip(trow)
                        {
                            *g += v * w;
                        }
                    }
                }
                let gr = Self::slot(grads, *row, c);
                for i in 0..r {
                    let xseg = &tx.values[i * c..(i + 1) * c];
                    for ((g, &v), &xv) in gr.iter_mut().zip(&gout[i * c..(i + 1) * c]).zip(xseg) {
                        *g += v * xv;
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    let g = Self::slot(grads, *v, gout.len());
                    for (gs, &go) in g.iter_mut().zip(gout) {
                        *gs += go;
                    }
                }
            }
            Op::Sub(a, b) => {
                {
                    let g = Self::slot(grads, *a, gout.len());
                    for (gs, &go) in g.iter_mut().zip(gout) {
                        *gs += go;
                    }
                }
                let g = Self::slot(grads, *b, gout.len());
                for (gs, &go) in g.iter_mut().zip(gout) {
                    *gs -= go;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.value(*a).values, &self.value(*b).values);
                {
                    let g = Self::slot(grads, *a, gout.len());
                    for ((gs, &go), &y) in g.iter_mut().zip(gout).zip(vb) {
                        *gs += go * y;
                    }
                }
                let g = Self::slot(grads, *b, gout.len());
                for ((gs, &go), &x) in g.iter_mut().zip(gout).zip(va) {
                    *gs += go * x;
                }
            }
            Op::Div(a, b) => {
                let vb = &self.value(*b).values;
                let vz = &self.nodes[idx].value.values;
                {
                    let g = Self::slot(grads, *a, gout.len());
                    for ((gs, &go), &y) in g.iter_mut().zip(gout).zip(vb) {
                        *gs += go / y;
                    }
                }
                let g = Self::slot(grads, *b, gout.len());
                for (((gs, &go), &y), &z) in g.iter_mut().zip(gout).zip(vb).zip(vz) {
                    *gs -= go * z / y;
                }
            }
            Op::Scale(x, s) => {
                let g = Self::slot(grads, *x, gout.len());
                for (gs, &go) in g.iter_mut().zip(gout) {
                    *gs += go * s;
                }
            }
            Op::Shift(x) => {
                let g = Self::slot(grads, *x, gout.len());
                for (gs, &go) in g.iter_mut().zip(gout) {
                    *gs += go;
                }
            }
            Op::MulConst(x, c) => {
                let g = Self::slot(grads, *x, gout.len());
                for ((gs, &go), &cv) in g.iter_mut().zip(gout).zip(c) {
                    *gs += go * cv;
                }
            }
            Op::AffineCols(x, a) => {
                let cols = a.len();
                let g = Self::slot(grads, *x, gout.len());
                for (i, (gs, &go)) in g.iter_mut().zip(gout).enumerate() {
                    *gs += go * a[i % cols];
                }
            }
            Op::Act(x, kind) => {
                let vx = &self.value(*x).values;
                let vy = &self.nodes[idx].value.values;
                let g = Self::slot(grads, *x, gout.len());
                for (((gs, &go), &xin), &yout) in g.iter_mut().zip(gout).zip(vx).zip(vy) {
                    *gs += go * kind.derivative(xin, yout);
                }
            }
            Op::Square(x) => {
                let vx = &self.value(*x).values;
                let g = Self::slot(grads, *x, gout.len());
                for ((gs, &go), &xv) in g.iter_mut().zip(gout).zip(vx) {
                    *gs += go * 2.0 * xv;
                }
            }
            Op::Abs(x) => {
                let vx = &self.value(*x).values;
                let g = Self::slot(grads, *x, gout.len());
                for ((gs, &go), &xv) in g.iter_mut().zip(gout).zip(vx) {
                    *gs += go * if xv > 0.0 { 1.0 } else if xv < 0.0 { -1.0 } else { 0.0 };
                }
            }
            Op::ClampMin(x, floor) => {
                let vx = &self.value(*x).values;
                let g = Self::slot(grads, *x, gout.len());
                for ((gs, &go), &xv) in g.iter_mut().zip(gout).zip(vx) {
                    if xv > *floor {
                        *gs += go;
                    }
                }
            }
            Op::SliceRows(x, start) => {
                let cols = self.value(*x).cols;
                let len = self.value(*x).len();
                let g = Self::slot(grads, *x, len);
                let base = start * cols;
                for (gs, &go) in g[base..base + gout.len()].iter_mut().zip(gout) {
                    *gs += go;
                }
            }
            Op::SliceCols(x, start) => {
                let tx = self.value(*x);
                let (rows, cols) = (tx.rows, tx.cols);
                let width = gout.len() / rows;
                let g = Self::slot(grads, *x, rows * cols);
                for r in 0..rows {
                    let dst = &mut g[r * cols + start..r * cols + start + width];
                    for (gs, &go) in dst.iter_mut().zip(&gout[r * width..(r + 1) * width]) {
                        *gs += go;
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    let g = Self::slot(grads, p, len);
                    for (gs, &go) in g.iter_mut().zip(&gout[offset..offset + len]) {
                        *gs += go;
                    }
                    offset += len;
                }
            }
            Op::SumAll(x) => {
                let len = self.value(*x).len();
                let g = Self::slot(grads, *x, len);
                for gs in g.iter_mut() {
                    *gs += gout[0];
                }
            }
            Op::MeanAll(x) => {
                let len = self.value(*x).len();
                let g = Self::slot(grads, *x, len);
                let scale = gout[0] / len as f64;
                for gs in g.iter_mut() {
                    *gs += scale;
                }
            }
        }
    }
}
