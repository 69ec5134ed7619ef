//! `gen-data`: generate the synthetic daily quote panel and write it as a
//! quote CSV.

use anyhow::{Context, Result};
use arbsurf::dataset::format_quotes;
use arbsurf::dataset::synth::synth_generate;

use crate::manifest::Manifest;
use crate::pipeline::Workspace;

pub fn cmd_gen_data(ws: &Workspace) -> Result<()> {
    let config = ws.config.data.to_synth()?;
    let panel = synth_generate(&config, ws.config.seed)?;
    let text = format_quotes(&panel.snapshots)?;

    let path = ws.data_file();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .with_context(|| format!("cannot create {}", dir.display()))?;
    }
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;

    let mut manifest = Manifest::new("gen-data", ws.config.seed, &ws.canonical);
    manifest.output(&ws.config.paths.data, &path)?;
    manifest.write(&ws.report_dir())?;

    let per_day = config.deltas.len() * config.tau_days.len();
    println!(
        "generated {} days x {} quotes -> {} ({} day(s) redrawn by the arbitrage scan)",
        panel.snapshots.len(),
        per_day,
        path.display(),
        panel.redraws
    );
    Ok(())
}
