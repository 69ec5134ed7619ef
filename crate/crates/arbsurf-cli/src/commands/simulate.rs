//! `simulate`: roll the fitted two-step model forward from the end of
//! the panel, drawing feature-transition errors from a residual model,
//! and write the surface ensemble.

use anyhow::{bail, Result};
use arbsurf::features::extract_series;
use arbsurf::simulate::{default_mode, fit_error_model, simulate_paths, ErrorMode, NoiseKind, SimulationModels};

use crate::manifest::Manifest;
use crate::pipeline::{feature_file, load_decoder, load_predictor, load_surface, predictor_file, surface_file, Workspace};
use crate::reports::write_csv;

fn parse_noise(tag: &str) -> Result<NoiseKind> {
    match tag {
        "gaussian" => Ok(NoiseKind::Gaussian),
        "bootstrap" => Ok(NoiseKind::Bootstrap),
        _ => bail!("unknown noise kind {tag:?} (expected gaussian or bootstrap)"),
    }
}

fn parse_mode(tag: &str) -> Result<Option<ErrorMode>> {
    match tag {
        "default" => Ok(None),
        "additive" => Ok(Some(ErrorMode::Additive)),
        "multiplicative" => Ok(Some(ErrorMode::Multiplicative)),
        _ => bail!("unknown error mode {tag:?} (expected default, additive, or multiplicative)"),
    }
}

pub fn cmd_simulate(ws: &Workspace) -> Result<()> {
    let panel = ws.load_panel()?;
    let kind = ws.config.features.kind()?;
    let sim = &ws.config.simulate;
    let noise = parse_noise(&sim.noise)?;
    let mode = parse_mode(&sim.mode)?.unwrap_or_else(|| default_mode(kind));

    let mut manifest = Manifest::new("simulate", ws.config.seed, &ws.canonical);
    manifest.input(&ws.config.paths.data, &ws.data_file())?;
    let decoder = load_decoder(ws, kind, panel.grid.size())?;
    let predictor = load_predictor(ws, kind)?;
    let surface = load_surface(ws, kind, panel.grid.size())?;
    for file in feature_file(kind)
        .iter()
        .chain([predictor_file(kind), surface_file(kind)].iter())
    {
        manifest.input(&ws.model_label(file), &ws.model_file(file))?;
    }

    let gridded: Vec<_> = panel.days.iter().map(|d| d.gridded.clone()).collect();
    let history = extract_series(&decoder, &gridded)?;
    let error = fit_error_model(&history, &predictor, mode, noise)?;
    let models = SimulationModels {
        predictor: &predictor,
        decoder: &decoder,
        surface: &surface,
        error: &error,
    };
    let start = panel
        .days
        .last()
        .expect("load_panel rejects empty panels")
        .snapshot
        .date;
    println!(
        "simulating {} path(s) x {} step(s) from {} ({} features, {:?} errors) ...",
        sim.paths,
        sim.horizon,
        start,
        kind.tag(),
        noise
    );
    let paths = simulate_paths(
        &models,
        &history,
        &panel.grid,
        start,
        sim.horizon,
        sim.paths,
        ws.config.seed,
    )?;

    let mut rows = Vec::with_capacity(sim.paths * sim.horizon * panel.grid.size());
    for (k, path) in paths.iter().enumerate() {
        for (s, surface) in path.surfaces.iter().enumerate() {
            for i_m in 0..panel.grid.m.len() {
                for i_tau in 0..panel.grid.tau.len() {
                    let (m, tau) = panel.grid.node(i_m, i_tau);
                    let vol = surface.vols[panel.grid.flat(i_m, i_tau)];
                    rows.push(format!(
                        "{},{},{},{},{},{}",
                        k, s, surface.date, m, tau, vol
                    ));
                }
            }
        }
    }
    let name = "ensemble.csv";
    write_csv(&ws.report_file(name), "path,step,date,m,tau,vol", &rows)?;
    manifest.output(&ws.report_label(name), &ws.report_file(name))?;
    manifest.write(&ws.report_dir())?;
    println!("wrote {}", ws.report_file(name).display());
    Ok(())
}
