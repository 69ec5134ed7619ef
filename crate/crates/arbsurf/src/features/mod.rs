//! Feature extraction for gridded vol surfaces.
//!
//! Three interchangeable ways to turn a day's gridded vol set into a
//! low(er)-dimensional feature vector `Z_t`, each paired with a decoder
//! `h` mapping predicted features back to a gridded vol set:
//!
//! * **SAM** — the sampled vols themselves (identity map, one feature per
//!   grid node);
//! * **PCA** — inner products against the leading eigenvectors of daily
//!   log-surface movements, decoded as `exp(X0 + sum x_k f_k)` ([`pca`]);
//! * **VAE** — the mean head of a variational autoencoder, decoded by its
//!   decoder network ([`vae`]).
//!
//! [`FeatureModel`] wraps a fitted instance of any of the three behind one
//! encode/decode interface, and [`extract_series`] maps a panel of days to
//! the feature sequence consumed by the sequence predictor.

use alloc::format;
use alloc::vec::Vec;

use crate::dataset::GriddedSurface;
use crate::error::{Error, Result};

pub mod pca;
pub mod vae;

pub use pca::{pca_decode, pca_encode, pca_fit, PcaBasis, PCA_MODEL_KIND};
pub use vae::{
    vae_decode, vae_encode, vae_train, VaeEpoch, VaeModel, DEFAULT_BETA, DEFAULT_LATENT,
    VAE_DEPTH, VAE_HIDDEN, VAE_MODEL_KIND,
};

/// Which of the three feature maps produced a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Sam,
    Pca,
    Vae,
}

impl FeatureKind {
    /// Short lower-case tag used in reports and file names.
    pub fn tag(self) -> &'static str {
        match self {
            FeatureKind::Sam => "sam",
            FeatureKind::Pca => "pca",
            FeatureKind::Vae => "vae",
        }
    }
}

/// A time-indexed sequence of feature vectors of constant dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub kind: FeatureKind,
    pub dim: usize,
    /// One feature vector per day, in panel order.
    pub z: Vec<Vec<f64>>,
}

impl FeatureSeries {
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (t, z) in self.z.iter().enumerate() {
            if z.len() != self.dim {
                return Err(Error::shape(format!(
                    "feature vector {t} has dimension {}, expected {}",
                    z.len(),
                    self.dim
                )));
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::data(format!("feature vector {t} has non-finite entries")));
            }
            if self.kind == FeatureKind::Sam && z.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::data(format!(
                    "feature vector {t}: sampled vols must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Flattens a day's gridded vols into the feature vector used by the
/// sampling method (moneyness-major order, one entry per node). The
/// matching decoder is the identity.
pub fn sam_extract(g: &GriddedSurface) -> Vec<f64> {
    g.vols.clone()
}

/// A fitted feature map: encode a day's gridded vols to features, decode
/// features back to gridded vols.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    /// Identity features over a grid of the given size.
    Sam { grid_size: usize },
    Pca(PcaBasis),
    Vae(VaeModel),
}

impl FeatureModel {
    pub fn kind(&self) -> FeatureKind {
        match self {
            FeatureModel::Sam { .. } => FeatureKind::Sam,
            FeatureModel::Pca(_) => FeatureKind::Pca,
            FeatureModel::Vae(_) => FeatureKind::Vae,
        }
    }

    /// Dimension of the feature vectors this model produces.
    pub fn dim(&self) -> usize {
        match self {
            FeatureModel::Sam { grid_size } => *grid_size,
            FeatureModel::Pca(basis) => basis.k,
            FeatureModel::Vae(model) => model.latent(),
        }
    }

    /// Grid size the model encodes from / decodes to.
    pub fn grid_size(&self) -> usize {
        match self {
            FeatureModel::Sam { grid_size } => *grid_size,
            FeatureModel::Pca(basis) => basis.dim(),
            FeatureModel::Vae(model) => model.dim(),
        }
    }

    pub fn encode(&self, vols: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureModel::Sam { grid_size } => {
                if vols.len() != *grid_size {
                    return Err(Error::shape(format!(
                        "encode: {} vols against a {grid_size}-node grid",
                        vols.len()
                    )));
                }
                if vols.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                    return Err(Error::data("sampled vols must be positive"));
                }
                Ok(vols.to_vec())
            }
            FeatureModel::Pca(basis) => pca_encode(basis, vols, basis.k),
            FeatureModel::Vae(model) => vae_encode(model, vols),
        }
    }

    /// The decoder `h`: maps a feature vector to gridded vols
    /// (moneyness-major order).
    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self {
            FeatureModel::Sam { grid_size } => {
                if z.len() != *grid_size {
                    return Err(Error::shape(format!(
                        "decode: {} features against a {grid_size}-node grid",
                        z.len()
                    )));
                }
                Ok(z.to_vec())
            }
            FeatureModel::Pca(basis) => pca_decode(basis, z),
            FeatureModel::Vae(model) => vae_decode(model, z),
        }
    }
}

/// Encodes every day of a panel, yielding the feature sequence `Z_1..Z_T`.
pub fn extract_series(model: &FeatureModel, days: &[GriddedSurface]) -> Result<FeatureSeries> {
    let z = days
        .iter()
        .map(|g| model.encode(&g.vols))
        .collect::<Result<Vec<_>>>()?;
    let series = FeatureSeries {
        kind: model.kind(),
        dim: model.dim(),
        z,
    };
    series.validate()?;
    Ok(series)
}
