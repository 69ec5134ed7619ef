//! Declarative run configuration: a TOML document with one section per
//! pipeline stage, shipped with the defaults that reproduce the synthetic
//! experiment end to end, plus command-line overrides applied on top.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arbsurf::dataset::synth::{ParamDynamics, SynthConfig};
use arbsurf::dataset::{FixedGrid, NaiveDate};
use arbsurf::features::FeatureKind;
use serde::{Deserialize, Serialize};

/// Which second stage `fit` trains and `predict`/`evaluate` pair with a
/// feature method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepTwoKind {
    /// The penalty-trained surface network.
    Dnn,
    /// The quadratic polynomial refit to each day's conditioning vols.
    Dfw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Quote CSV written by `gen-data` and read by every other command.
    pub data: PathBuf,
    /// Directory holding fitted model files.
    pub models: PathBuf,
    /// Directory holding report CSVs and manifests.
    pub reports: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data/quotes.csv"),
            models: PathBuf::from("models"),
            reports: PathBuf::from("reports"),
        }
    }
}

/// The fixed sampling grid, quoted as strike-over-forward ratios and
/// maturities in days; converted to (log-moneyness, year-fraction) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub moneyness_ratios: Vec<f64>,
    pub tau_days: Vec<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            moneyness_ratios: vec![
                0.6, 0.8, 0.9, 0.95, 0.975, 1.0, 1.025, 1.05, 1.1, 1.2, 1.3, 1.5, 1.75, 2.0,
            ],
            tau_days: vec![
                10.0, 30.0, 60.0, 91.0, 122.0, 152.0, 182.0, 273.0, 365.0, 547.0, 730.0,
            ],
        }
    }
}

impl GridSection {
    pub fn to_grid(&self) -> Result<FixedGrid> {
        if self.moneyness_ratios.iter().any(|&r| !(r > 0.0)) {
            bail!("grid.moneyness_ratios must be positive strike/forward ratios");
        }
        let grid = FixedGrid {
            m: self.moneyness_ratios.iter().map(|r| r.ln()).collect(),
            tau: self.tau_days.iter().map(|d| d / 365.0).collect(),
        };
        grid.validate()?;
        Ok(grid)
    }
}

/// One mean-reverting surface-parameter process of the generator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSection {
    pub mid: f64,
    pub amp: f64,
    pub ar: f64,
    pub noise: f64,
}

impl From<DynamicsSection> for ParamDynamics {
    fn from(d: DynamicsSection) -> Self {
        ParamDynamics {
            mid: d.mid,
            amp: d.amp,
            ar: d.ar,
            noise: d.noise,
        }
    }
}

impl From<ParamDynamics> for DynamicsSection {
    fn from(d: ParamDynamics) -> Self {
        Self {
            mid: d.mid,
            amp: d.amp,
            ar: d.ar,
            noise: d.noise,
        }
    }
}

/// Synthetic-panel generation and the chronological split.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub days: usize,
    /// ISO-8601 date of the first generated day.
    pub start_date: String,
    /// Fraction of days assigned to the training side of the split.
    pub split_ratio: f64,
    pub rate: f64,
    pub div_yield: f64,
    /// Call deltas quoted each day (strictly increasing).
    pub deltas: Vec<f64>,
    /// Maturities quoted each day, in days (strictly increasing).
    pub tau_days: Vec<f64>,
    pub max_redraws: u32,
    pub level: DynamicsSection,
    pub term: DynamicsSection,
    pub skew: DynamicsSection,
    pub curvature: DynamicsSection,
}

impl Default for DataSection {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            days: synth.days,
            start_date: synth.start_date.to_string(),
            split_ratio: 0.79,
            rate: synth.rate,
            div_yield: synth.div_yield,
            deltas: synth.deltas,
            tau_days: synth.tau_days,
            max_redraws: synth.max_redraws,
            level: synth.level.into(),
            term: synth.term.into(),
            skew: synth.skew.into(),
            curvature: synth.curvature.into(),
        }
    }
}

impl DataSection {
    pub fn to_synth(&self) -> Result<SynthConfig> {
        let start_date: NaiveDate = self
            .start_date
            .parse()
            .with_context(|| format!("data.start_date {:?} is not an ISO-8601 date", self.start_date))?;
        let config = SynthConfig {
            days: self.days,
            start_date,
            deltas: self.deltas.clone(),
            tau_days: self.tau_days.clone(),
            rate: self.rate,
            div_yield: self.div_yield,
            level: self.level.into(),
            term: self.term.into(),
            skew: self.skew.into(),
            curvature: self.curvature.into(),
            max_redraws: self.max_redraws,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Feature extraction: method selection and its hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    /// `sam`, `pca`, or `vae`.
    pub method: String,
    /// Second stage trained by `fit` for this method.
    pub step2: StepTwoKind,
    /// Number of principal components (PCA).
    pub components: usize,
    /// Latent dimension (VAE).
    pub latent_dim: usize,
    /// KL regularization weight (VAE).
    pub beta: f64,
    pub vae_epochs: usize,
    pub vae_batch_size: usize,
    pub vae_learning_rate: f64,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        Self {
            method: "sam".to_string(),
            step2: StepTwoKind::Dnn,
            components: 3,
            latent_dim: 10,
            beta: 1e-3,
            vae_epochs: 100,
            vae_batch_size: 32,
            vae_learning_rate: 1e-3,
        }
    }
}

impl FeaturesSection {
    pub fn kind(&self) -> Result<FeatureKind> {
        parse_kind(&self.method)
    }
}

pub fn parse_kind(tag: &str) -> Result<FeatureKind> {
    match tag {
        "sam" => Ok(FeatureKind::Sam),
        "pca" => Ok(FeatureKind::Pca),
        "vae" => Ok(FeatureKind::Vae),
        other => bail!("unknown feature method {other:?} (expected sam, pca, or vae)"),
    }
}

/// One-day-ahead feature predictor training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub learning_rate: f64,
}

impl Default for PredictorSection {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 128,
            hidden: 12,
            learning_rate: 0.01,
        }
    }
}

/// Penalty-constrained surface network training.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstructorSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub learning_rate: f64,
    /// Weight of the arbitrage penalties against the fit term.
    pub lambda: f64,
    /// Penalty probe grid resolution (moneyness x maturity).
    pub m_nodes: usize,
    pub tau_nodes: usize,
}

impl Default for ConstructorSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 1024,
            hidden: 50,
            learning_rate: 0.001,
            lambda: 1.0,
            m_nodes: 41,
            tau_nodes: 41,
        }
    }
}

/// Forward scenario generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub horizon: usize,
    pub paths: usize,
    /// `gaussian` or `bootstrap` residual draws.
    pub noise: String,
    /// `default` (per feature-method), `additive`, or `multiplicative`.
    pub mode: String,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            horizon: 5,
            paths: 100,
            noise: "gaussian".to_string(),
            mode: "default".to_string(),
        }
    }
}

/// Backtest model selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Model tags: `{sam,pca,vae}-{dnn,dfw}` and the carried-fit
    /// benchmark `dfw`.
    pub models: Vec<String>,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self {
            models: vec!["sam-dnn".to_string(), "sam-dfw".to_string(), "dfw".to_string()],
        }
    }
}

/// The full run configuration. Any subset may appear in the TOML file;
/// missing keys take these defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub grid: GridSection,
    pub data: DataSection,
    pub features: FeaturesSection,
    pub predictor: PredictorSection,
    pub constructor: ConstructorSection,
    pub simulate: SimulateSection,
    pub evaluate: EvaluateSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text)
            .with_context(|| format!("cannot parse config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.to_grid()?;
        self.data.to_synth()?;
        self.features.kind()?;
        if !(self.data.split_ratio > 0.0 && self.data.split_ratio < 1.0) {
            bail!(
                "data.split_ratio = {}: must be strictly between 0 and 1",
                self.data.split_ratio
            );
        }
        Ok(())
    }

    /// Canonical TOML rendering of the effective configuration, digested
    /// into every manifest so a run's inputs are fully identified.
    pub fn canonical_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
