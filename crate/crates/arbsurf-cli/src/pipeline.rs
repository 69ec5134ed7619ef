//! Shared plumbing between subcommands: path resolution against the run
//! root, panel loading and splitting, model-file naming, and typed
//! load/save wrappers over the parameter-file format.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use arbsurf::constructor::{SurfaceNet, SURFACE_MODEL_KIND};
use arbsurf::dataset::{build_panel, split_panel, Panel, PanelSplit, SurfaceSnapshot};
use arbsurf::evaluate::{BacktestModel, StepTwo};
use arbsurf::features::{FeatureKind, FeatureModel, PcaBasis, VaeModel, PCA_MODEL_KIND, VAE_MODEL_KIND};
use arbsurf::nn::{load_params, save_params, NetworkParams};
use arbsurf::predictor::{PredictorModel, PREDICTOR_MODEL_KIND};

use crate::config::RunConfig;

/// A run rooted at `--out`: the effective configuration plus its canonical
/// rendering (digested into manifests).
pub struct Workspace {
    pub root: PathBuf,
    pub config: RunConfig,
    pub canonical: String,
}

impl Workspace {
    pub fn new(root: PathBuf, config: RunConfig) -> Result<Self> {
        let canonical = config.canonical_toml()?;
        Ok(Self {
            root,
            config,
            canonical,
        })
    }

    /// Resolves a configured path against the run root (absolute paths
    /// pass through).
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.root.join(path)
        }
    }

    pub fn data_file(&self) -> PathBuf {
        self.resolve(&self.config.paths.data)
    }

    pub fn report_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.reports)
    }

    /// Configuration-relative label of a report file (manifest key).
    pub fn report_label(&self, name: &str) -> PathBuf {
        self.config.paths.reports.join(name)
    }

    pub fn report_file(&self, name: &str) -> PathBuf {
        self.report_dir().join(name)
    }

    pub fn model_label(&self, name: &str) -> PathBuf {
        self.config.paths.models.join(name)
    }

    pub fn model_file(&self, name: &str) -> PathBuf {
        self.resolve(&self.config.paths.models).join(name)
    }

    /// Reads and parses the quote CSV.
    pub fn load_snapshots(&self) -> Result<Vec<SurfaceSnapshot>> {
        let path = self.data_file();
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read quote data {}", path.display()))?;
        Ok(arbsurf::dataset::parse_quotes(&text)?)
    }

    /// Loads the panel: quotes resampled onto the configured grid.
    pub fn load_panel(&self) -> Result<Panel> {
        let grid = self.config.grid.to_grid()?;
        Ok(build_panel(self.load_snapshots()?, grid)?)
    }

    /// Loads the panel and splits it chronologically at the configured
    /// ratio (training share rounded to whole days, both sides non-empty).
    pub fn load_split(&self) -> Result<PanelSplit> {
        let panel = self.load_panel()?;
        let days = panel.days.len();
        if days < 2 {
            bail!("panel has {days} day(s); the split needs at least 2");
        }
        let n_train = ((days as f64 * self.config.data.split_ratio).round() as usize)
            .clamp(1, days - 1);
        let split_date = panel.days[n_train - 1].snapshot.date;
        Ok(split_panel(panel, split_date)?)
    }
}

/// File name of the feature model for a method; `None` for direct
/// sampling, which has no fitted parameters.
pub fn feature_file(kind: FeatureKind) -> Option<String> {
    match kind {
        FeatureKind::Sam => None,
        FeatureKind::Pca => Some("pca.model".to_string()),
        FeatureKind::Vae => Some("vae.model".to_string()),
    }
}

pub fn predictor_file(kind: FeatureKind) -> String {
    format!("predictor-{}.model", kind.tag())
}

pub fn surface_file(kind: FeatureKind) -> String {
    format!("surface-{}.model", kind.tag())
}

pub fn save_model(path: &Path, params: &NetworkParams) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    let bytes = save_params(params)?;
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn load_model(path: &Path, expected_kind: &str) -> Result<NetworkParams> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("missing model file {}", path.display()))?;
    Ok(load_params(&bytes, expected_kind)?)
}

/// Loads the decoder for a feature method; `grid_size` fixes the direct
/// sampler's dimension and cross-checks the fitted models.
pub fn load_decoder(ws: &Workspace, kind: FeatureKind, grid_size: usize) -> Result<FeatureModel> {
    let model = match kind {
        FeatureKind::Sam => FeatureModel::Sam { grid_size },
        FeatureKind::Pca => {
            let params = load_model(&ws.model_file("pca.model"), PCA_MODEL_KIND)?;
            FeatureModel::Pca(PcaBasis::from_params(&params)?)
        }
        FeatureKind::Vae => {
            let params = load_model(&ws.model_file("vae.model"), VAE_MODEL_KIND)?;
            FeatureModel::Vae(VaeModel::from_params(&params)?)
        }
    };
    if model.grid_size() != grid_size {
        bail!(
            "{} model decodes to {} grid vols, but the configured grid has {} nodes",
            kind.tag(),
            model.grid_size(),
            grid_size
        );
    }
    Ok(model)
}

pub fn load_predictor(ws: &Workspace, kind: FeatureKind) -> Result<PredictorModel> {
    let params = load_model(&ws.model_file(&predictor_file(kind)), PREDICTOR_MODEL_KIND)?;
    let model = PredictorModel::from_params(&params)?;
    if model.kind != kind {
        bail!(
            "predictor file {} holds a {} model, expected {}",
            predictor_file(kind),
            model.kind.tag(),
            kind.tag()
        );
    }
    Ok(model)
}

pub fn load_surface(ws: &Workspace, kind: FeatureKind, grid_size: usize) -> Result<SurfaceNet> {
    let params = load_model(&ws.model_file(&surface_file(kind)), SURFACE_MODEL_KIND)?;
    let net = SurfaceNet::from_params(&params)?;
    if net.feature_dim() != grid_size {
        bail!(
            "surface file {} conditions on {} vols, but the configured grid has {} nodes",
            surface_file(kind),
            net.feature_dim(),
            grid_size
        );
    }
    Ok(net)
}

/// A parsed backtest model tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelTag {
    /// `{method}-dnn`: predicted features through the surface network.
    Dnn(FeatureKind),
    /// `{method}-dfw`: predicted features through a daily quadratic refit.
    Dfw(FeatureKind),
    /// `dfw`: the previous day's quadratic fit carried forward.
    Benchmark,
}

pub fn parse_tag(tag: &str) -> Result<ModelTag> {
    if tag == "dfw" {
        return Ok(ModelTag::Benchmark);
    }
    let (method, step2) = tag
        .split_once('-')
        .ok_or_else(|| anyhow!("unknown model tag {tag:?}"))?;
    let kind = crate::config::parse_kind(method)
        .map_err(|_| anyhow!("unknown model tag {tag:?} (bad feature method)"))?;
    match step2 {
        "dnn" => Ok(ModelTag::Dnn(kind)),
        "dfw" => Ok(ModelTag::Dfw(kind)),
        _ => bail!("unknown model tag {tag:?} (expected -dnn or -dfw)"),
    }
}

enum LoadedKind {
    TwoStep {
        predictor: PredictorModel,
        decoder: FeatureModel,
        /// `None` runs the daily quadratic refit instead of the network.
        surface: Option<SurfaceNet>,
    },
    Carry,
}

/// A backtest model with its trained parts loaded from disk, plus the
/// model-file names it came from (for manifests).
pub struct LoadedModel {
    pub files: Vec<String>,
    kind: LoadedKind,
}

impl LoadedModel {
    pub fn backtest(&self) -> BacktestModel<'_> {
        match &self.kind {
            LoadedKind::Carry => BacktestModel::QuadraticCarry,
            LoadedKind::TwoStep {
                predictor,
                decoder,
                surface,
            } => BacktestModel::TwoStep {
                predictor,
                decoder,
                step2: match surface {
                    Some(net) => StepTwo::Network(net),
                    None => StepTwo::Quadratic,
                },
            },
        }
    }
}

/// Loads every model file a tag needs; `dfw` needs none.
pub fn load_tag_model(ws: &Workspace, tag: &str, grid_size: usize) -> Result<LoadedModel> {
    match parse_tag(tag)? {
        ModelTag::Benchmark => Ok(LoadedModel {
            files: Vec::new(),
            kind: LoadedKind::Carry,
        }),
        ModelTag::Dnn(kind) => {
            let decoder = load_decoder(ws, kind, grid_size)?;
            let predictor = load_predictor(ws, kind)?;
            let surface = load_surface(ws, kind, grid_size)?;
            let mut files = vec![predictor_file(kind), surface_file(kind)];
            files.extend(feature_file(kind));
            Ok(LoadedModel {
                files,
                kind: LoadedKind::TwoStep {
                    predictor,
                    decoder,
                    surface: Some(surface),
                },
            })
        }
        ModelTag::Dfw(kind) => {
            let decoder = load_decoder(ws, kind, grid_size)?;
            let predictor = load_predictor(ws, kind)?;
            let mut files = vec![predictor_file(kind)];
            files.extend(feature_file(kind));
            Ok(LoadedModel {
                files,
                kind: LoadedKind::TwoStep {
                    predictor,
                    decoder,
                    surface: None,
                },
            })
        }
    }
}
