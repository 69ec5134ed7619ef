//! Finite-difference verification of reverse-mode gradients.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Compares analytic gradients against central finite differences of a loss
/// closure, coordinate by coordinate, and returns the worst relative error
/// `|a - n| / max(|a|, |n|, 1e-6)`.
///
/// `loss` must be a pure function of the tensors it is handed. Use small
/// instances: the cost is two loss evaluations per parameter coordinate.
pub fn max_rel_error<F>(
    tensors: &[Tensor],
    grads: &[Vec<f64>],
    mut loss: F,
    step: f64,
) -> Result<f64>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if tensors.len() != grads.len() {
        return Err(Error::shape(format!(
            "{} tensors with {} gradient vectors",
            tensors.len(),
            grads.len()
        )));
    }
    let mut work: Vec<Tensor> = tensors.to_vec();
    let mut worst = 0.0f64;
    for k in 0..tensors.len() {
        if grads[k].len() != tensors[k].len() {
            return Err(Error::shape(format!(
                "tensor {k}: {} values with {} gradient entries",
                tensors[k].len(),
                grads[k].len()
            )));
        }
        for i in 0..tensors[k].len() {
            let orig = work[k].values[i];
            work[k].values[i] = orig + step;
            let up = loss(&work)?;
            work[k].values[i] = orig - step;
            let down = loss(&work)?;
            work[k].values[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let analytic = grads[k][i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
