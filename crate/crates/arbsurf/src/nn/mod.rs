//! Numerical substrate for the learned models: dense tensors, reverse-mode
//! automatic differentiation, layers, Xavier initialization, the Adam
//! optimizer, input batch normalization, seeded minibatching, and versioned
//! model serialization.
//!
//! Everything here is deterministic: given a seed and a configuration,
//! training produces bit-identical parameters run to run on one platform.

pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod serial;
pub mod tape;
pub mod tensor;

pub use layers::{xavier_init, Dense, DenseVars, InputNorm, LstmCell, LstmVars, Mlp, NormVars};
pub use optim::{minibatches, shuffled_indices, Adam, TrainConfig};
pub use serial::{load_params, save_params, BnStats, LayerDesc, LayerKind, NetworkParams};
pub use tape::{sigmoid, softplus, ActKind, Gradients, Tape, Var};
pub use tensor::{matmul, matmul_nt, matmul_tn, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Result;
    use alloc::vec;
    use alloc::vec::Vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    /// Shared harness: builds a loss from a parameter tensor through a
    /// caller-supplied graph, computes analytic gradients, and compares
    /// against central finite differences with step 1e-5.
    fn check<F>(params: Vec<Tensor>, build: F) -> f64
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &vars).unwrap();
        let grads = tape.backward(loss).unwrap();
        let analytic: Vec<Vec<f64>> = vars
            .iter()
            .map(|&v| grads.of(v).unwrap().to_vec())
            .collect();

        gradcheck::max_rel_error(
            &params,
            &analytic,
            |ts| {
                let mut tape = Tape::new();
                let vars: Vec<Var> = ts.iter().map(|t| tape.leaf(t.clone())).collect();
                let loss = build(&mut tape, &vars)?;
                Ok(tape.value(loss).values[0])
            },
            1e-5,
        )
        .unwrap()
    }

    fn sample_params(seed: u64) -> (Tensor, Tensor, Tensor) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let w = xavier_init(3, 3, 4, &mut rng);
        let b = xavier_init(4, 1, 4, &mut rng);
        let x = xavier_init(2, 5, 3, &mut rng);
        (w, b, x)
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        for act in [
            ActKind::Identity,
            ActKind::Sigmoid,
            ActKind::Tanh,
            ActKind::Relu,
            ActKind::Softplus,
            ActKind::Exp,
        ] {
            let (w, b, x) = sample_params(act.code() as u64 + 1);
            let err = check(vec![w, b, x], |tape, vars| {
                let z = tape.matmul(vars[2], vars[0])?;
                let z = tape.add_row(z, vars[1])?;
                let y = tape.activation(z, act);
                let sq = tape.square(y);
                Ok(tape.mean_all(sq))
            });
            assert!(err < 1e-4, "activation {act:?}: rel err {err}");
        }
    }

    #[test]
    fn batch_norm_gradients_match_finite_differences() {
        // Gradients flow to the scale/shift and through the standardized
        // input; the batch statistics are constants of the step, so the
        // finite-difference loss must hold them fixed too (it recomputes
        // them from the perturbed batch, which is exactly the train-mode
        // semantics being tested).
        let mut rng = ChaCha12Rng::seed_from_u64(40);
        let gamma = xavier_init(1, 1, 3, &mut rng);
        let beta = xavier_init(1, 1, 3, &mut rng);
        let x = xavier_init(1, 6, 3, &mut rng);

        // Eval-mode statistics: constants, so the map is affine in x.
        let mean = vec![0.2, -0.1, 0.05];
        let var = vec![1.5, 0.8, 2.0];
        let eps = 1e-5f64;
        let err = check(vec![gamma, beta, x], |tape, vars| {
            let a: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
            let d: Vec<f64> = mean.iter().zip(&a).map(|(&m, &s)| -m * s).collect();
            let y = tape.affine_cols(vars[2], &a, &d)?;
            let y = tape.mul_row(y, vars[0])?;
            let y = tape.add_row(y, vars[1])?;
            let sq = tape.square(y);
            Ok(tape.mean_all(sq))
        });
        assert!(err < 1e-4, "batch-norm rel err {err}");
    }

    #[test]
    fn lstm_cell_gradients_match_finite_differences() {
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let cell = LstmCell::new(3, 2, &mut rng);
        let x = xavier_init(1, 4, 3, &mut rng);
        let h0 = xavier_init(1, 4, 2, &mut rng);
        let c0 = xavier_init(1, 4, 2, &mut rng);
        let hidden = cell.hidden;

        let err = check(
            vec![cell.wx.clone(), cell.wh.clone(), cell.b.clone(), x, h0, c0],
            |tape, vars| {
                let cell = LstmCell {
                    wx: tape.value(vars[0]).clone(),
                    wh: tape.value(vars[1]).clone(),
                    b: tape.value(vars[2]).clone(),
                    hidden,
                };
                let lstm_vars = LstmVars {
                    wx: vars[0],
                    wh: vars[1],
                    b: vars[2],
                };
                // Two chained steps so gradients flow through the recurrence.
                let (h1, c1) = cell.step(tape, lstm_vars, vars[3], vars[4], vars[5])?;
                let (h2, _c2) = cell.step(tape, lstm_vars, vars[3], h1, c1)?;
                let sq = tape.square(h2);
                Ok(tape.mean_all(sq))
            },
        );
        assert!(err < 1e-4, "lstm cell rel err {err}");
    }

    #[test]
    fn composite_graph_gradients_match_finite_differences() {
        // Exercises the remaining op set in one graph: slicing, concatting,
        // division, absolute value, clamping, scalar arithmetic.
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        let a = xavier_init(2, 4, 3, &mut rng);
        let b = xavier_init(2, 4, 3, &mut rng);

        let err = check(vec![a, b], |tape, vars| {
            let top = tape.slice_rows(vars[0], 0, 2)?;
            let bottom = tape.slice_rows(vars[0], 2, 2)?;
            let swapped = tape.concat_rows(&[bottom, top])?;
            let shifted = tape.shift(vars[1], 2.5); // keep denominators away from 0
            let ratio = tape.div(swapped, shifted)?;
            let left = tape.slice_cols(ratio, 0, 2)?;
            let right = tape.slice_cols(ratio, 1, 2)?;
            let prod = tape.mul(left, right)?;
            let scaled = tape.mul_const(prod, &[0.5, -1.5, 2.0, 1.0, 0.25, -0.75, 1.0, 3.0])?;
            let mag = tape.abs(scaled);
            let floored = tape.clamp_min(mag, 0.05);
            let s = tape.scale(floored, 1.7);
            let sum = tape.sum_all(s);
            let again = tape.square(sum);
            Ok(tape.mean_all(again))
        });
        assert!(err < 1e-4, "composite graph rel err {err}");
    }

    #[test]
    fn training_is_bit_reproducible() {
        // A small regression net trained twice from the same seed must end
        // with bit-identical parameters.
        let run = || {
            let mut rng = ChaCha12Rng::seed_from_u64(99);
            let mut mlp = Mlp::new(
                &[2, 6, 1],
                &[ActKind::Tanh, ActKind::Identity],
                &mut rng,
            )
            .unwrap();
            let config = TrainConfig::new(5, 4, 0.01, 99);
            let mut adam = Adam::new(&config);

            let data: Vec<([f64; 2], f64)> = (0..16)
                .map(|i| {
                    let x = [(i as f64 * 0.37).sin(), (i as f64 * 0.71).cos()];
                    (x, x[0] * 0.5 - x[1] * x[1])
                })
                .collect();

            for _ in 0..config.epochs {
                for batch in minibatches(data.len(), config.batch_size, &mut rng) {
                    let mut xs = Vec::new();
                    let mut ys = Vec::new();
                    for &i in &batch {
                        xs.extend_from_slice(&data[i].0);
                        ys.push(data[i].1);
                    }
                    let n = batch.len();
                    let mut tape = Tape::new();
                    let vars = mlp.attach(&mut tape);
                    let x = tape.leaf(Tensor::from_values(n, 2, xs).unwrap());
                    let y = tape.leaf(Tensor::from_values(n, 1, ys).unwrap());
                    let pred = mlp.forward(&mut tape, &vars, x).unwrap();
                    let resid = tape.sub(pred, y).unwrap();
                    let sq = tape.square(resid);
                    let loss = tape.mean_all(sq);
                    let grads = tape.backward(loss).unwrap();
                    mlp.adam_update(&vars, &grads, &mut adam, config.learning_rate)
                        .unwrap();
                }
            }
            mlp.layers
                .iter()
                .flat_map(|l| l.w.values.iter().chain(&l.b.values).copied())
                .collect::<Vec<f64>>()
        };
        let first = run();
        assert_eq!(first, run());
        assert!(first.iter().all(|v| v.is_finite()));
    }
}
