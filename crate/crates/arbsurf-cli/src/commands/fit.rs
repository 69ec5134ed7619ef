//! `fit`: train the selected feature model (if it has parameters), the
//! one-day-ahead feature predictor, and — for the `dnn` second stage —
//! the penalty-constrained surface network. Writes model files and
//! training-curve CSVs.

use anyhow::Result;
use arbsurf::constructor::{train_constructor, ConstructorConfig, ConstructorDay, PenaltyGridConfig};
use arbsurf::dataset::PanelDay;
use arbsurf::features::{extract_series, pca_fit, vae_train, FeatureKind, FeatureModel};
use arbsurf::nn::TrainConfig;
use arbsurf::predictor::{train_predictor, PredictorConfig};

use crate::config::StepTwoKind;
use crate::manifest::Manifest;
use crate::pipeline::{feature_file, predictor_file, save_model, surface_file, Workspace};
use crate::reports::write_csv;

/// Conditioning vol sets for constructor training: each day's own
/// features pushed through the decoder (the identity for direct
/// sampling, the reconstruction for PCA/VAE).
fn constructor_days(decoder: &FeatureModel, days: &[PanelDay]) -> Result<Vec<ConstructorDay>> {
    days.iter()
        .map(|day| {
            let z = decoder.encode(&day.gridded.vols)?;
            Ok(ConstructorDay {
                f: decoder.decode(&z)?,
                quotes: day.snapshot.points.clone(),
            })
        })
        .collect()
}

pub fn cmd_fit(ws: &Workspace) -> Result<()> {
    let split = ws.load_split()?;
    let kind = ws.config.features.kind()?;
    let seed = ws.config.seed;
    let features = &ws.config.features;
    let mut manifest = Manifest::new("fit", seed, &ws.canonical);
    manifest.input(&ws.config.paths.data, &ws.data_file())?;

    let train_gridded: Vec<_> = split.train.iter().map(|d| d.gridded.clone()).collect();

    // Feature model.
    let decoder = match kind {
        FeatureKind::Sam => FeatureModel::Sam {
            grid_size: split.grid.size(),
        },
        FeatureKind::Pca => {
            println!("fitting {}-component eigenbasis ...", features.components);
            FeatureModel::Pca(pca_fit(&train_gridded, features.components)?)
        }
        FeatureKind::Vae => {
            println!(
                "training variational autoencoder (latent {}, {} epochs) ...",
                features.latent_dim, features.vae_epochs
            );
            let cfg = TrainConfig::new(
                features.vae_epochs,
                features.vae_batch_size,
                features.vae_learning_rate,
                seed,
            );
            let (model, curve) = vae_train(&train_gridded, features.latent_dim, features.beta, &cfg)?;
            let rows: Vec<String> = curve
                .iter()
                .enumerate()
                .map(|(i, e)| format!("{},{},{},{}", i + 1, e.loss, e.re, e.kl))
                .collect();
            let name = "vae-curve.csv";
            write_csv(&ws.report_file(name), "epoch,loss,re,kl", &rows)?;
            manifest.output(&ws.report_label(name), &ws.report_file(name))?;
            FeatureModel::Vae(model)
        }
    };
    if let Some(name) = feature_file(kind) {
        let params = match &decoder {
            FeatureModel::Pca(basis) => basis.to_params(),
            FeatureModel::Vae(model) => model.to_params(),
            FeatureModel::Sam { .. } => unreachable!("direct sampling has no parameters"),
        };
        save_model(&ws.model_file(&name), &params)?;
        manifest.output(&ws.model_label(&name), &ws.model_file(&name))?;
    }

    // Predictor on the training features.
    let series = extract_series(&decoder, &train_gridded)?;
    println!(
        "training {} feature predictor ({} epochs) ...",
        kind.tag(),
        ws.config.predictor.epochs
    );
    let pred_config = PredictorConfig {
        train: TrainConfig::new(
            ws.config.predictor.epochs,
            ws.config.predictor.batch_size,
            ws.config.predictor.learning_rate,
            seed,
        ),
        hidden: ws.config.predictor.hidden,
    };
    let (predictor, losses) = train_predictor(&series, &pred_config)?;
    let name = predictor_file(kind);
    save_model(&ws.model_file(&name), &predictor.to_params())?;
    manifest.output(&ws.model_label(&name), &ws.model_file(&name))?;
    let curve_name = format!("lstm-curve-{}.csv", kind.tag());
    let rows: Vec<String> = losses
        .iter()
        .enumerate()
        .map(|(i, l)| format!("{},{}", i + 1, l))
        .collect();
    write_csv(&ws.report_file(&curve_name), "epoch,mse", &rows)?;
    manifest.output(&ws.report_label(&curve_name), &ws.report_file(&curve_name))?;

    // Surface network (dnn second stage only; the quadratic refit has no
    // trained parameters).
    if features.step2 == StepTwoKind::Dnn {
        let c = &ws.config.constructor;
        println!(
            "training surface network ({} epochs, lambda {}) ...",
            c.epochs, c.lambda
        );
        let train_days = constructor_days(&decoder, &split.train)?;
        let test_days = constructor_days(&decoder, &split.test)?;
        let config = ConstructorConfig {
            train: TrainConfig::new(c.epochs, c.batch_size, c.learning_rate, seed),
            hidden: c.hidden,
            lambda: c.lambda,
            grid: PenaltyGridConfig {
                m_nodes: c.m_nodes,
                tau_nodes: c.tau_nodes,
                ..PenaltyGridConfig::default()
            },
            ..ConstructorConfig::default()
        };
        let (net, report) = train_constructor(&train_days, &test_days, &config)?;
        let name = surface_file(kind);
        save_model(&ws.model_file(&name), &net.to_params())?;
        manifest.output(&ws.model_label(&name), &ws.model_file(&name))?;

        let mut rows = Vec::with_capacity(report.train.len() * 2);
        for (i, v) in report.train.iter().enumerate() {
            rows.push(format!(
                "{},train,{},{},{},{}",
                i + 1,
                v.l_s,
                v.l_c3,
                v.l_c4,
                v.l_c5
            ));
            if let Some(t) = report.test.get(i) {
                rows.push(format!(
                    "{},test,{},{},{},{}",
                    i + 1,
                    t.l_s,
                    t.l_c3,
                    t.l_c4,
                    t.l_c5
                ));
            }
        }
        let curve_name = format!("penalty-curve-{}.csv", kind.tag());
        write_csv(
            &ws.report_file(&curve_name),
            "epoch,split,l_s,l_c3,l_c4,l_c5",
            &rows,
        )?;
        manifest.output(&ws.report_label(&curve_name), &ws.report_file(&curve_name))?;
    }

    manifest.write(&ws.report_dir())?;
    println!("fit complete: {} / {}", kind.tag(), match features.step2 {
        StepTwoKind::Dnn => "dnn",
        StepTwoKind::Dfw => "dfw",
    });
    Ok(())
}
