//! Dense row-major matrices and the multiply kernels everything trains on.
//!
//! All tensors here are two-dimensional (a vector is a 1-by-n matrix). The
//! multiply kernels use the i-k-j loop order so the inner loop walks both
//! operands contiguously, which the compiler vectorizes; on this workload
//! that is the difference between minutes and hours of training.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// A dense row-major matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::shape(format!(
                "{} values for a {rows}x{cols} tensor",
                values.len()
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// A 1-by-n row vector.
    pub fn row(values: Vec<f64>) -> Self {
        Self {
            rows: 1,
            cols: values.len(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.values[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

fn shape_check(ok: bool, what: &str, a: &Tensor, b: &Tensor) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{what}: {}x{} with {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )))
    }
}

/// `a * b`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    shape_check(a.cols == b.rows, "matmul", a, b)?;
    let mut out = Tensor::zeros(a.rows, b.cols);
    matmul_into(&mut out.values, &a.values, &b.values, a.rows, a.cols, b.cols);
    Ok(out)
}

/// `a * b^T`, with `a` of shape r-by-k and `b` of shape c-by-k.
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    shape_check(a.cols == b.cols, "matmul_nt", a, b)?;
    let (r, k, c) = (a.rows, a.cols, b.rows);
    let mut out = Tensor::zeros(r, c);
    for i in 0..r {
        let arow = &a.values[i * k..(i + 1) * k];
        let orow = &mut out.values[i * c..(i + 1) * c];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b.values[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (x, y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *o = acc;
        }
    }
    Ok(out)
}

/// `a^T * b`, with `a` of shape k-by-r and `b` of shape k-by-c.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    shape_check(a.rows == b.rows, "matmul_tn", a, b)?;
    let (k, r, c) = (a.rows, a.cols, b.cols);
    let mut out = Tensor::zeros(r, c);
    for p in 0..k {
        let arow = &a.values[p * r..(p + 1) * r];
        let brow = &b.values[p * c..(p + 1) * c];
        for (i, &aval) in arow.iter().enumerate() {
            let orow = &mut out.values[i * c..(i + 1) * c];
            for (o, &bval) in orow.iter_mut().zip(brow) {
                *o += aval * bval;
            }
        }
    }
    Ok(out)
}

/// `out += a * b` on raw row-major buffers (`a`: r-by-k, `b`: k-by-c).
pub(crate) fn matmul_into(out: &mut [f64], a: &[f64], b: &[f64], r: usize, k: usize, c: usize) {
    debug_assert_eq!(out.len(), r * c);
    debug_assert_eq!(a.len(), r * k);
    debug_assert_eq!(b.len(), k * c);
    for i in 0..r {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * c..(i + 1) * c];
        for (p, &aval) in arow.iter().enumerate() {
            let brow = &b[p * c..(p + 1) * c];
            for (o, &bval) in orow.iter_mut().zip(brow) {
                *o += aval * bval;
            }
        }
    }
}
