//! Rolling-origin evaluation: monthly refits over an expanding window,
//! pooled metrics, bootstrap intervals and pairwise Diebold-Mariano tests,
//! written as report.json, forecasts.csv, figures and a markdown summary.
//!
//! ```text
//! cargo run --release --example rolling_backtest -- [output dir]
//! ```

use peakcast::evaluation::{
    build_forecaster, build_schedule, render_summary, run_backtest, write_figures, write_forecasts_csv,
    write_report_json, BacktestOptions, Forecaster, ModelEntry,
};
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

fn main() -> peakcast::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "rolling_backtest_out".into());
    let data = SyntheticData::generate(&SyntheticConfig {
        days: 2 * 365,
        seed: 12,
        ..Default::default()
    })?;
    let table = data.prepared()?.daily_table()?;
    let schedule = build_schedule(data.load.start_date, data.load.end_date(), 12, 1)?;
    println!("{} folds, first test month starts {}", schedule.folds.len(), schedule.initial_train_end);

    let models = ["persistence", "LR-arima", "LR-gauss", "MR-gauss", "LR-ocat"]
        .iter()
        .map(|id| build_forecaster(&ModelEntry::builtin(id)?))
        .collect::<peakcast::Result<Vec<Box<dyn Forecaster>>>>()?;
    let outcome = run_backtest(&models, &schedule, &table, &BacktestOptions::default())?;

    std::fs::create_dir_all(&out).map_err(|e| peakcast::Error::io(&out, e))?;
    write_report_json(&outcome.report, format!("{out}/report.json"))?;
    write_forecasts_csv(&outcome.forecasts, format!("{out}/forecasts.csv"))?;
    write_figures(&outcome.report, format!("{out}/figures"))?;
    let summary = render_summary(&outcome.report);
    std::fs::write(format!("{out}/summary.md"), &summary).map_err(|e| peakcast::Error::io(&out, e))?;
    println!("{summary}");
    Ok(())
}
