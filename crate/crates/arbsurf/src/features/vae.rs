//! Variational autoencoder features for gridded vol surfaces.
//!
//! The encoder is a three-hidden-layer (128-wide, tanh) network whose two
//! linear heads produce the latent mean `mu(Y)` and log standard deviation
//! `s(Y)`; the standard deviation is `sigma = exp(s)` so positivity is
//! built in. The decoder mirrors the trunk back to the grid. Training
//! minimizes
//!
//! ```text
//! L = RE + beta * KL,
//! RE  = per-entry mean squared reconstruction error,
//! KL  = (1/2) * mean over batch of sum_k (mu_k^2 + sigma_k^2 - 2 s_k - 1),
//! ```
//!
//! with the reparameterization `H = mu + sigma .* eps`, `eps ~ N(0, I_d)`.
//! Feature extraction is deterministic: a day encodes to `mu(Y)` with no
//! sampling, and decoding is a plain forward pass of the decoder.

#[allow(unused_imports)]
use num_traits::Float;

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::dataset::GriddedSurface;
use crate::error::{Error, Result};
use crate::math::std_normal;
use crate::nn::{
    minibatches, ActKind, Adam, Dense, LayerDesc, LayerKind, Mlp, NetworkParams, Tape, Tensor,
    TrainConfig, Var,
};

/// Hidden width of every encoder/decoder layer.
pub const VAE_HIDDEN: usize = 128;
/// Hidden depth on each side.
pub const VAE_DEPTH: usize = 3;
/// Default latent dimension.
pub const DEFAULT_LATENT: usize = 10;
/// Default KL weight.
pub const DEFAULT_BETA: f64 = 1e-3;

pub const VAE_MODEL_KIND: &str = "vae";

/// Encoder trunk + mean/log-std heads and the mirrored decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    trunk: Mlp,
    mu_head: Dense,
    s_head: Dense,
    decoder: Mlp,
    beta: f64,
    trained: bool,
}

/// Per-epoch averages of the training objective and its two parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VaeEpoch {
    pub loss: f64,
    pub re: f64,
    pub kl: f64,
}

impl VaeModel {
    /// Freshly initialized (untrained) model over a `dim`-node grid.
    pub fn new<R: RngCore + ?Sized>(
        dim: usize,
        latent: usize,
        beta: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("grid size must be positive"));
        }
        if latent == 0 {
            return Err(Error::config("latent dimension must be positive"));
        }
        if latent > dim {
            return Err(Error::config(format!(
                "latent dimension {latent} exceeds grid size {dim}"
            )));
        }
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::config(format!("beta must be finite and >= 0, got {beta}")));
        }
        let h = VAE_HIDDEN;
        let acts = [ActKind::Tanh; VAE_DEPTH];
        let trunk = Mlp::new(&[dim, h, h, h], &acts, rng)?;
        let mu_head = Dense::new(h, latent, ActKind::Identity, rng);
        let s_head = Dense::new(h, latent, ActKind::Identity, rng);
        let decoder = Mlp::new(
            &[latent, h, h, h, dim],
            &[ActKind::Tanh, ActKind::Tanh, ActKind::Tanh, ActKind::Identity],
            rng,
        )?;
        Ok(Self {
            trunk,
            mu_head,
            s_head,
            decoder,
            beta,
            trained: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.trunk.layers[0].w.rows
    }

    pub fn latent(&self) -> usize {
        self.mu_head.w.cols
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    fn require_trained(&self) -> Result<()> {
        if self.trained {
            Ok(())
        } else {
            Err(Error::mode("model has not been trained"))
        }
    }

    fn dense_layers(&self) -> Vec<&Dense> {
        let mut layers: Vec<&Dense> = self.trunk.layers.iter().collect();
        layers.push(&self.mu_head);
        layers.push(&self.s_head);
        layers.extend(self.decoder.layers.iter());
        layers
    }

    pub fn to_params(&self) -> NetworkParams {
        let mut layers = Vec::new();
        let mut tensors = Vec::new();
        for (i, dense) in self.dense_layers().into_iter().enumerate() {
            layers.push(LayerDesc {
                kind: LayerKind::Dense,
                activation: dense.act,
                fan_in: dense.w.rows as u32,
                fan_out: dense.w.cols as u32,
            });
            tensors.push((format!("l{i}.w"), dense.w.clone()));
            tensors.push((format!("l{i}.b"), dense.b.clone()));
        }
        tensors.push(("beta".to_string(), Tensor::row(vec![self.beta])));
        NetworkParams {
            model_kind: VAE_MODEL_KIND.to_string(),
            layers,
            norms: Vec::new(),
            tensors,
        }
    }

    pub fn from_params(params: &NetworkParams) -> Result<Self> {
        if params.model_kind != VAE_MODEL_KIND {
            return Err(Error::format(format!(
                "expected {VAE_MODEL_KIND:?} parameters, found {:?}",
                params.model_kind
            )));
        }
        let n_layers = VAE_DEPTH + 2 + VAE_DEPTH + 1;
        if params.layers.len() != n_layers {
            return Err(Error::format(format!(
                "expected {n_layers} dense layers, found {}",
                params.layers.len()
            )));
        }
        let mut denses = Vec::with_capacity(n_layers);
        for (i, desc) in params.layers.iter().enumerate() {
            if desc.kind != LayerKind::Dense {
                return Err(Error::format("autoencoder layers must all be dense"));
            }
            let w = params.tensor(&format!("l{i}.w"))?.clone();
            let b = params.tensor(&format!("l{i}.b"))?.clone();
            if w.rows != desc.fan_in as usize
                || w.cols != desc.fan_out as usize
                || b.rows != 1
                || b.cols != w.cols
            {
                return Err(Error::format(format!("layer {i} tensor shapes disagree")));
            }
            denses.push(Dense {
                w,
                b,
                act: desc.activation,
            });
        }
        let beta = params.tensor("beta")?.values[0];
        let decoder_layers = denses.split_off(VAE_DEPTH + 2);
        let s_head = denses.pop().expect("layer count checked");
        let mu_head = denses.pop().expect("layer count checked");
        let trunk = Mlp { layers: denses };

        let model = Self {
            trunk,
            mu_head,
            s_head,
            decoder: Mlp {
                layers: decoder_layers,
            },
            beta,
            trained: true,
        };
        let (d, dim) = (model.latent(), model.dim());
        if model.s_head.w.cols != d
            || model.decoder.layers[0].w.rows != d
            || model.decoder.layers.last().expect("non-empty").w.cols != dim
        {
            return Err(Error::format("encoder/decoder widths are inconsistent"));
        }
        Ok(model)
    }
}

/// Builds the KL node `(1/2) * mean over rows of sum_k
/// (mu_k^2 + exp(2 s_k) - 2 s_k - 1)` from the mean and log-std heads.
pub(crate) fn kl_node(tape: &mut Tape, mu: Var, log_std: Var) -> Result<Var> {
    let rows = tape.value(mu).rows;
    let sigma = tape.activation(log_std, ActKind::Exp);
    let mu2 = tape.square(mu);
    let sig2 = tape.square(sigma);
    let sum = tape.add(mu2, sig2)?;
    let two_s = tape.scale(log_std, 2.0);
    let diff = tape.sub(sum, two_s)?;
    let shifted = tape.shift(diff, -1.0);
    let total = tape.sum_all(shifted);
    Ok(tape.scale(total, 0.5 / rows as f64))
}

fn batch_tensor(days: &[GriddedSurface], idx: &[usize], dim: usize) -> Tensor {
    let mut values = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        values.extend_from_slice(&days[i].vols);
    }
    Tensor {
        rows: idx.len(),
        cols: dim,
        values,
    }
}

/// Trains a VAE on a gridded panel. Deterministic per `config.seed`;
/// returns the model and the per-epoch loss curve.
///
/// # Errors
/// `Error::Config` if `latent` is 0 or exceeds the grid size or the
/// training configuration is invalid; `Error::Data` on an empty or
/// non-finite panel; `Error::Diverged` if the loss leaves the finite
/// range.
pub fn vae_train(
    train: &[GriddedSurface],
    latent: usize,
    beta: f64,
    config: &TrainConfig,
) -> Result<(VaeModel, Vec<VaeEpoch>)> {
    config.validate()?;
    let Some(first) = train.first() else {
        return Err(Error::data("training panel is empty"));
    };
    let dim = first.vols.len();
    for g in train {
        if g.vols.len() != dim {
            return Err(Error::shape(format!(
                "day {}: {} vols, expected {dim}",
                g.date,
                g.vols.len()
            )));
        }
        if g.vols.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!("day {}: non-finite vols", g.date)));
        }
    }

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut model = VaeModel::new(dim, latent, beta, &mut rng)?;
    let mut adam = Adam::new(config);
    let n = train.len();
    let mut curve = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let batches = minibatches(n, config.batch_size, &mut rng);
        let (mut loss_sum, mut re_sum, mut kl_sum) = (0.0, 0.0, 0.0);
        for batch in batches {
            let nb = batch.len();
            let mut tape = Tape::new();
            let trunk_vars = model.trunk.attach(&mut tape);
            let mu_vars = model.mu_head.attach(&mut tape);
            let s_vars = model.s_head.attach(&mut tape);
            let dec_vars = model.decoder.attach(&mut tape);

            let x = tape.leaf(batch_tensor(train, &batch, dim));
            let t = model.trunk.forward(&mut tape, &trunk_vars, x)?;
            let mu = model.mu_head.forward(&mut tape, mu_vars, t)?;
            let s = model.s_head.forward(&mut tape, s_vars, t)?;
            let sigma = tape.activation(s, ActKind::Exp);

            let eps = Tensor {
                rows: nb,
                cols: latent,
                values: (0..nb * latent).map(|_| std_normal(&mut rng)).collect(),
            };
            let eps = tape.leaf(eps);
            let noise = tape.mul(sigma, eps)?;
            let h = tape.add(mu, noise)?;
            let y = model.decoder.forward(&mut tape, &dec_vars, h)?;

            let resid = tape.sub(y, x)?;
            let sq = tape.square(resid);
            let re = tape.mean_all(sq);
            let kl = kl_node(&mut tape, mu, s)?;
            let weighted_kl = tape.scale(kl, beta);
            let loss = tape.add(re, weighted_kl)?;

            let loss_v = tape.value(loss).values[0];
            let re_v = tape.value(re).values[0];
            let kl_v = tape.value(kl).values[0];
            if !loss_v.is_finite() {
                return Err(Error::Diverged(format!(
                    "epoch {epoch}: loss {loss_v} (re {re_v}, kl {kl_v})"
                )));
            }
            let w = nb as f64 / n as f64;
            loss_sum += loss_v * w;
            re_sum += re_v * w;
            kl_sum += kl_v * w;

            let grads = tape.backward(loss)?;
            let mut grad_slices = Mlp::grads(&trunk_vars, &grads)?;
            grad_slices.push(grads.of(mu_vars.w)?);
            grad_slices.push(grads.of(mu_vars.b)?);
            grad_slices.push(grads.of(s_vars.w)?);
            grad_slices.push(grads.of(s_vars.b)?);
            grad_slices.extend(Mlp::grads(&dec_vars, &grads)?);

            let mut params = model.trunk.params_mut();
            params.push(&mut model.mu_head.w.values);
            params.push(&mut model.mu_head.b.values);
            params.push(&mut model.s_head.w.values);
            params.push(&mut model.s_head.b.values);
            params.extend(model.decoder.params_mut());

            let mut updates: Vec<(&mut [f64], &[f64])> =
                params.into_iter().zip(grad_slices).collect();
            adam.step(&mut updates, config.learning_rate)?;
        }
        curve.push(VaeEpoch {
            loss: loss_sum,
            re: re_sum,
            kl: kl_sum,
        });
    }
    model.trained = true;
    Ok((model, curve))
}

/// Encodes a day's gridded vols to the latent mean `mu(Y)`. Deterministic
/// (no sampling).
pub fn vae_encode(model: &VaeModel, vols: &[f64]) -> Result<Vec<f64>> {
    model.require_trained()?;
    if vols.len() != model.dim() {
        return Err(Error::shape(format!(
            "encode: {} vols against a {}-node model",
            vols.len(),
            model.dim()
        )));
    }
    let x = Tensor::row(vols.to_vec());
    let t = model.trunk.eval(&x)?;
    Ok(model.mu_head.eval(&t)?.values)
}

/// Decodes a latent vector back to gridded vols (moneyness-major order).
pub fn vae_decode(model: &VaeModel, z: &[f64]) -> Result<Vec<f64>> {
    model.require_trained()?;
    if z.len() != model.latent() {
        return Err(Error::shape(format!(
            "decode: latent vector of length {}, expected {}",
            z.len(),
            model.latent()
        )));
    }
    Ok(model.decoder.eval(&Tensor::row(z.to_vec()))?.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::NaiveDate;
    use crate::nn::{load_params, save_params};

    fn day(i: u64, vols: Vec<f64>) -> GriddedSurface {
        let base =
            chrono::Datelike::num_days_from_ce(&NaiveDate::from_ymd_opt(2020, 1, 1).unwrap());
        GriddedSurface {
            date: NaiveDate::from_num_days_from_ce_opt(base + i as i32).unwrap(),
            vols,
        }
    }

    fn random_panel(dim: usize, days: usize, seed: u64) -> Vec<GriddedSurface> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut log: Vec<f64> = (0..dim).map(|i| -1.5 + 0.02 * i as f64).collect();
        (0..days as u64)
            .map(|t| {
                for l in log.iter_mut() {
                    *l += 0.05 * std_normal(&mut rng);
                }
                day(t, log.iter().map(|&l| l.exp()).collect())
            })
            .collect()
    }

    fn kl_of(mu: Vec<f64>, log_std: Vec<f64>, rows: usize) -> f64 {
        let cols = mu.len() / rows;
        let mut tape = Tape::new();
        let m = tape.leaf(Tensor {
            rows,
            cols,
            values: mu,
        });
        let s = tape.leaf(Tensor {
            rows,
            cols,
            values: log_std,
        });
        let kl = kl_node(&mut tape, m, s).unwrap();
        tape.value(kl).values[0]
    }

    #[test]
    fn kl_matches_hand_values() {
        // mu = 0, sigma = 1 (log-std 0): every summand is -1 - 0 + 1 + 0.
        assert_eq!(kl_of(vec![0.0; 3], vec![0.0; 3], 1), 0.0);
        // d = 1, mu = 1, sigma = 1: (1/2)(-1 - 0 + 1 + 1).
        assert!((kl_of(vec![1.0], vec![0.0], 1) - 0.5).abs() < 1e-15);
        // Batch average of the two rows above in one dimension.
        assert!((kl_of(vec![0.0, 1.0], vec![0.0, 0.0], 2) - 0.25).abs() < 1e-15);
        // KL is differentiable and zero exactly at the prior.
        assert!(kl_of(vec![0.3], vec![-0.2], 1) > 0.0);
    }

    #[test]
    fn invalid_latent_dimensions_are_rejected() {
        let panel = random_panel(6, 4, 1);
        let cfg = TrainConfig::new(1, 4, 1e-3, 0);
        assert!(matches!(
            vae_train(&panel, 7, 1e-3, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            vae_train(&panel, 0, 1e-3, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            vae_train(&panel, 2, -1.0, &cfg),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            vae_train(&[], 2, 1e-3, &cfg),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn untrained_model_refuses_to_encode_or_decode() {
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let model = VaeModel::new(6, 2, 1e-3, &mut rng).unwrap();
        assert!(matches!(
            vae_encode(&model, &[0.2; 6]),
            Err(Error::Mode(_))
        ));
        assert!(matches!(vae_decode(&model, &[0.0; 2]), Err(Error::Mode(_))));
    }

    #[test]
    fn encode_is_deterministic_with_latent_dimension() {
        let panel = random_panel(8, 6, 3);
        let cfg = TrainConfig::new(4, 4, 1e-3, 7);
        let (model, curve) = vae_train(&panel, 3, 1e-3, &cfg).unwrap();
        assert_eq!(curve.len(), 4);

        let z1 = vae_encode(&model, &panel[2].vols).unwrap();
        let z2 = vae_encode(&model, &panel[2].vols).unwrap();
        assert_eq!(z1, z2, "no sampling at encode time");
        assert_eq!(z1.len(), 3);

        let back = vae_decode(&model, &z1).unwrap();
        assert_eq!(back.len(), 8);
        assert!(matches!(
            vae_decode(&model, &[0.0; 4]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            vae_encode(&model, &[0.2; 5]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn training_is_bit_reproducible_per_seed() {
        let panel = random_panel(7, 10, 5);
        let cfg = TrainConfig::new(3, 4, 1e-3, 11);
        let (m1, c1) = vae_train(&panel, 2, 1e-3, &cfg).unwrap();
        let (m2, c2) = vae_train(&panel, 2, 1e-3, &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(c1, c2);

        let other = TrainConfig::new(3, 4, 1e-3, 12);
        let (m3, _) = vae_train(&panel, 2, 1e-3, &other).unwrap();
        assert_ne!(m1, m3);
    }

    #[test]
    fn unregularized_full_width_model_memorizes_three_surfaces() {
        // Autoencoder capacity check: with beta = 0 and latent width equal
        // to the grid size, three surfaces should be reconstructed nearly
        // exactly after long training.
        let dim = 12;
        let panel = random_panel(dim, 3, 9);
        let cfg = TrainConfig::new(3000, 3, 1e-3, 1);
        let (model, curve) = vae_train(&panel, dim, 0.0, &cfg).unwrap();

        let final_re = curve.last().unwrap().re;
        assert!(final_re < 1e-4, "final epoch RE {final_re}");
        let mut sse = 0.0f64;
        for g in &panel {
            let z = vae_encode(&model, &g.vols).unwrap();
            let back = vae_decode(&model, &z).unwrap();
            sse += back
                .iter()
                .zip(&g.vols)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let mse = sse / (3 * dim) as f64;
        assert!(
            mse < 1e-4,
            "per-entry reconstruction MSE {mse} (final epoch RE {final_re})"
        );
    }

    #[test]
    fn epoch_loss_moving_average_is_non_increasing() {
        let panel = random_panel(10, 24, 13);
        let cfg = TrainConfig::new(60, 8, 3e-3, 5);
        let (_, curve) = vae_train(&panel, 3, 1e-3, &cfg).unwrap();

        let window = 10;
        let ma: Vec<f64> = curve
            .windows(window)
            .map(|w| w.iter().map(|e| e.loss).sum::<f64>() / window as f64)
            .collect();
        let drop = ma[0] - ma[ma.len() - 1];
        assert!(drop > 0.0, "loss failed to fall: {ma:?}");
        for pair in ma.windows(2) {
            assert!(
                pair[1] <= pair[0] + 0.05 * drop,
                "moving average rose from {} to {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn decode_is_continuous_in_the_latent() {
        let panel = random_panel(9, 8, 17);
        let cfg = TrainConfig::new(5, 4, 1e-3, 3);
        let (model, _) = vae_train(&panel, 3, 1e-3, &cfg).unwrap();

        let z = vae_encode(&model, &panel[4].vols).unwrap();
        let dir = [0.6, -0.8, 0.0];
        let base = vae_decode(&model, &z).unwrap();
        let mut norms = Vec::new();
        for k in 2..=6 {
            let step = 10f64.powi(-k);
            let moved: Vec<f64> = z.iter().zip(&dir).map(|(&a, &d)| a + step * d).collect();
            let out = vae_decode(&model, &moved).unwrap();
            let norm: f64 = out
                .iter()
                .zip(&base)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            norms.push(norm);
        }
        for pair in norms.windows(2) {
            assert!(pair[1] < pair[0], "output change must shrink with the step");
        }
        // Linear scaling: shrinking the step by 1e-4 shrinks the output
        // change by about the same factor.
        assert!(norms[4] <= 1e-3 * norms[0]);
        assert!(norms[4] < 1e-3);
    }

    #[test]
    fn serialization_round_trips_and_checks_kind() {
        let panel = random_panel(8, 5, 21);
        let cfg = TrainConfig::new(2, 4, 1e-3, 9);
        let (model, _) = vae_train(&panel, 2, 5e-4, &cfg).unwrap();

        let bytes = save_params(&model.to_params()).unwrap();
        let loaded = VaeModel::from_params(&load_params(&bytes, VAE_MODEL_KIND).unwrap()).unwrap();
        assert_eq!(model, loaded);
        assert_eq!(loaded.beta(), 5e-4);
        assert!(loaded.is_trained());
        assert_eq!(
            vae_encode(&model, &panel[0].vols).unwrap(),
            vae_encode(&loaded, &panel[0].vols).unwrap()
        );
        assert!(load_params(&bytes, "pca-basis").is_err());
    }

    #[test]
    fn runaway_learning_rate_reports_divergence() {
        let panel = random_panel(6, 4, 2);
        let cfg = TrainConfig::new(40, 4, 1e18, 1);
        match vae_train(&panel, 2, 1e-3, &cfg) {
            Err(Error::Diverged(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

}
