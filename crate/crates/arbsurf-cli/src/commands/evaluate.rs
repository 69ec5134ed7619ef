//! `evaluate`: rolling backtests for each configured model, error
//! measures on both splits, pairwise Diebold-Mariano comparisons, and
//! the no-arbitrage violation scan.

use anyhow::Result;
use arbsurf::dataset::PanelSplit;
use arbsurf::evaluate::{arb_violation, dm_test, mape, rmse, run_backtest, PredictionRun};
use arbsurf::predictor::LONG_WINDOW;

use crate::manifest::Manifest;
use crate::pipeline::{load_tag_model, Workspace};
use crate::reports::write_csv;

/// Re-splits the training days so the backtest can score them the same
/// way it scores held-out days: the first input window seeds the
/// recursion, every later training day is predicted from its
/// predecessors. `None` when there are too few days to split.
fn inner_split(split: &PanelSplit) -> Option<PanelSplit> {
    if split.train.len() <= LONG_WINDOW {
        return None;
    }
    Some(PanelSplit {
        grid: split.grid.clone(),
        train: split.train[..LONG_WINDOW].to_vec(),
        test: split.train[LONG_WINDOW..].to_vec(),
    })
}

/// Day-by-day error rows, reusing the pooled measures on one-day runs.
fn daily_rows(run: &PredictionRun, rows: &mut Vec<String>) -> Result<()> {
    for day in &run.days {
        let one = PredictionRun {
            model: run.model.clone(),
            days: vec![day.clone()],
        };
        rows.push(format!(
            "{},{},{},{}",
            day.date,
            run.model,
            rmse(&one)?,
            mape(&one)?
        ));
    }
    Ok(())
}

pub fn cmd_evaluate(ws: &Workspace) -> Result<()> {
    let split = ws.load_split()?;
    let inner = inner_split(&split);
    let mut manifest = Manifest::new("evaluate", ws.config.seed, &ws.canonical);
    manifest.input(&ws.config.paths.data, &ws.data_file())?;

    let mut summary = Vec::new();
    let mut daily = Vec::new();
    let mut violations = Vec::new();
    let mut test_runs: Vec<PredictionRun> = Vec::new();

    for tag in &ws.config.evaluate.models {
        let loaded = load_tag_model(ws, tag, split.grid.size())?;
        for file in &loaded.files {
            manifest.input(&ws.model_label(file), &ws.model_file(file))?;
        }
        let model = loaded.backtest();
        if let Some(inner) = &inner {
            let run = run_backtest(inner, &model)?;
            summary.push(format!(
                "{},train,{},{}",
                run.model,
                rmse(&run)?,
                mape(&run)?
            ));
        }
        let run = run_backtest(&split, &model)?;
        let (l_cal, l_but) = arb_violation(&run)?;
        println!(
            "{}: test rmse {:.6}, mape {:.6}, L_cal- {:.3e}, L_but- {:.3e}",
            run.model,
            rmse(&run)?,
            mape(&run)?,
            l_cal,
            l_but
        );
        summary.push(format!("{},test,{},{}", run.model, rmse(&run)?, mape(&run)?));
        daily_rows(&run, &mut daily)?;
        violations.push(format!("{},{},{}", run.model, l_cal, l_but));
        test_runs.push(run);
    }

    let mut dm = Vec::new();
    for first in &test_runs {
        for second in &test_runs {
            if first.model == second.model {
                continue;
            }
            let r = dm_test(first, second)?;
            dm.push(format!(
                "{},{},{},{},{},{},{}",
                first.model, second.model, r.statistic, r.p_value, r.days, r.lag, r.degenerate
            ));
        }
    }

    for (name, header, rows) in [
        ("summary.csv", "model,split,rmse,mape", &summary),
        ("daily.csv", "date,model,rmse,mape", &daily),
        (
            "dm_matrix.csv",
            "first,second,statistic,p_value,days,lag,degenerate",
            &dm,
        ),
        ("violations.csv", "model,l_cal_minus,l_but_minus", &violations),
    ] {
        write_csv(&ws.report_file(name), header, rows)?;
        manifest.output(&ws.report_label(name), &ws.report_file(name))?;
    }
    manifest.write(&ws.report_dir())?;
    println!("wrote reports to {}", ws.report_dir().display());
    Ok(())
}
