//! `predict`: run the rolling one-day-ahead backtest for each configured
//! model over the held-out days and write the per-quote predictions.

use anyhow::Result;
use arbsurf::evaluate::run_backtest;

use crate::manifest::Manifest;
use crate::pipeline::{load_tag_model, Workspace};
use crate::reports::write_csv;

pub fn cmd_predict(ws: &Workspace) -> Result<()> {
    let split = ws.load_split()?;
    let mut manifest = Manifest::new("predict", ws.config.seed, &ws.canonical);
    manifest.input(&ws.config.paths.data, &ws.data_file())?;

    let mut rows = Vec::new();
    for tag in &ws.config.evaluate.models {
        let loaded = load_tag_model(ws, tag, split.grid.size())?;
        for file in &loaded.files {
            manifest.input(&ws.model_label(file), &ws.model_file(file))?;
        }
        let run = run_backtest(&split, &loaded.backtest())?;
        println!(
            "{}: predicted {} day(s), {} quote(s)",
            run.model,
            run.days.len(),
            run.n_points()
        );
        for day in &run.days {
            for (point, predicted) in day.truth.iter().zip(&day.predicted) {
                rows.push(format!(
                    "{},{},{},{},{},{}",
                    day.date, run.model, point.m, point.tau, point.vol, predicted
                ));
            }
        }
    }

    let name = "predictions.csv";
    write_csv(
        &ws.report_file(name),
        "date,model,m,tau,truth,predicted",
        &rows,
    )?;
    manifest.output(&ws.report_label(name), &ws.report_file(name))?;
    manifest.write(&ws.report_dir())?;
    println!("wrote {}", ws.report_file(name).display());
    Ok(())
}
