//! The `peakcast` command line: `prepare`, `fit`, `backtest` and `report`
//! over one run configuration.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::baselines::fit_ar;
use crate::config::{Manifest, RunConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    build_forecaster, build_schedule, derive_seed, read_report_json, render_summary, run_backtest, write_figures,
    write_forecasts_csv, write_report_json, Forecaster, ModelClass, ModelEntry, Resolution, RollingSchedule,
};
use crate::features::{write_daily_csv, write_highres_csv, DailyPeakTable};
use crate::gam_engine::{self, FitOptions, Frame, Response};
use crate::ingest::{load_demand_csv, load_station_csv, PreparedData, SLOTS_PER_DAY};
use crate::nn_engine::arch::NeuralModel;
use crate::nn_engine::{Architecture, Loss, NnTarget, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "peakcast", version, about = "Daily peak demand forecasting pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ingest raw demand and weather files into prepared tables.
    Prepare(CommonArgs),
    /// Fit the roster on all prepared days and save the fitted models.
    Fit(CommonArgs),
    /// Run the rolling-origin backtest.
    Backtest(CommonArgs),
    /// Render figures and a markdown summary from a backtest report.
    Report(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated model ids (default: the configured roster).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
    /// Override the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    pub fn load_config(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        if !self.models.is_empty() {
            cfg.select_models(&self.models)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        Ok(cfg)
    }
}

/// Files written by a command and how many models failed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outcome {
    pub outputs: Vec<PathBuf>,
    pub failed_models: Vec<String>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failed_models.is_empty() {
            0
        } else {
            3
        }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Prepare(a) => cmd_prepare(&a.load_config()?),
        Command::Fit(a) => cmd_fit(&a.load_config()?),
        Command::Backtest(a) => cmd_backtest(&a.load_config()?),
        Command::Report(a) => cmd_report(&a.load_config()?),
    }
}

/// Cap the global thread pool from `PEAKCAST_THREADS`, if set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("PEAKCAST_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("PEAKCAST_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} threads: {e}")))?;
    }
    Ok(())
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = configure_threads() {
        log::error!("{e}");
        return e.exit_code();
    }
    match run(&cli) {
        Ok(outcome) => {
            for p in &outcome.outputs {
                log::info!("wrote {}", p.display());
            }
            for m in &outcome.failed_models {
                log::error!("model {m} failed");
            }
            outcome.exit_code()
        }
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

fn prepared_path(cfg: &RunConfig) -> PathBuf {
    cfg.output_dir.join("prepared.csv")
}

/// Load raw files and build the prepared series and tables.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData> {
    let load = load_demand_csv(&cfg.data.demand, &cfg.data.demand_options())?;
    let stations = cfg
        .data
        .stations
        .iter()
        .map(|s| load_station_csv(&s.path, &s.id, s.population, &cfg.data.weather_options()))
        .collect::<Result<Vec<_>>>()?;
    PreparedData::from_sources(load, &stations, cfg.data.smoothing)
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<Outcome> {
    let data = prepare_data(cfg)?;
    let out = &cfg.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let table = data.daily_table()?;
    let highres = data.highres_rows()?;
    log::info!(
        "{} days from {} to {}: {} daily rows, {} half-hourly rows, {} clock-change days excluded (with the day after)",
        data.n_days(),
        data.load.start_date,
        data.load.end_date(),
        table.len(),
        highres.len(),
        data.load.flagged_days.len()
    );
    for d in &data.load.flagged_days {
        log::info!("excluded {d}");
    }
    let paths = [prepared_path(cfg), out.join("daily.csv"), out.join("highres.csv")];
    data.write_csv(&paths[0])?;
    write_daily_csv(&table, &paths[1])?;
    write_highres_csv(&highres, &paths[2])?;
    finish("prepare", cfg, paths.to_vec(), Vec::new())
}

fn finish(command: &str, cfg: &RunConfig, mut outputs: Vec<PathBuf>, failed: Vec<String>) -> Result<Outcome> {
    let names = outputs.iter().map(|p| p.display().to_string()).collect();
    outputs.push(Manifest::new(command, cfg, names)?.write(&cfg.output_dir)?);
    Ok(Outcome {
        outputs,
        failed_models: failed,
    })
}

fn load_prepared(cfg: &RunConfig) -> Result<PreparedData> {
    let path = prepared_path(cfg);
    if !path.exists() {
        return Err(Error::InsufficientData(format!(
            "{} not found; run `peakcast prepare` first",
            path.display()
        )));
    }
    PreparedData::read_csv(path)
}

/// The configured rolling schedule over the prepared span.
pub fn schedule_for(cfg: &RunConfig, data: &PreparedData) -> Result<RollingSchedule> {
    let start = cfg.schedule.start.unwrap_or(data.load.start_date);
    let end = cfg.schedule.end.unwrap_or(data.load.end_date());
    build_schedule(start, end, cfg.schedule.initial_train_months, cfg.schedule.refit_months)
}

fn save_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    std::fs::write(path, serde_json::to_string(value)? + "\n").map_err(|e| Error::io(path, e))
}

/// Fit one roster entry on `table` and return its serialized form.
fn fit_entry(entry: &ModelEntry, table: &DailyPeakTable, seed: u64) -> Result<serde_json::Value> {
    let highres = || crate::evaluation::highres_of_table(table);
    Ok(match entry.class {
        ModelClass::Persistence => json!({ "model": "persistence" }),
        ModelClass::Ar => {
            let max_p = entry.max_order.unwrap_or(crate::baselines::DEFAULT_MAX_P);
            if entry.resolution == Some(Resolution::High) {
                let per_slot = (0..SLOTS_PER_DAY)
                    .map(|s| fit_ar(&table.rows.iter().map(|r| r.demand[s]).collect::<Vec<_>>(), max_p))
                    .collect::<Result<Vec<_>>>()?;
                serde_json::to_value(per_slot)?
            } else {
                serde_json::to_value(fit_ar(&table.dp(), max_p)?)?
            }
        }
        ModelClass::Gam => {
            let spec = entry.gam_spec()?;
            let frame = if spec.response == Response::HalfhourlyLoad {
                Frame::from_highres(&highres())
            } else {
                Frame::from_daily(table)
            };
            serde_json::to_value(gam_engine::fit(&spec, &frame, &FitOptions::default())?)?
        }
        ModelClass::Nn => {
            let s = entry.nn.clone().unwrap_or_default();
            let cfg = |seed| TrainConfig {
                epochs: s.epochs,
                batch_size: s.batch_size,
                learning_rate: s.learning_rate,
                optimizer: s.optimizer,
                seed,
                loss: Loss::Mse,
            };
            let arch = match entry.resolution {
                Some(Resolution::High) => {
                    return Ok(serde_json::to_value(NeuralModel::fit_highres(&highres(), &cfg(seed), &s.layers)?)?)
                }
                Some(Resolution::Low) => Architecture::LrFcnn,
                _ => Architecture::MrCnn,
            };
            let dp = NeuralModel::fit_daily(arch, NnTarget::Dp, &table.rows, &cfg(derive_seed(seed, "target", 0)), &s.layers)?;
            let ip = NeuralModel::fit_daily(arch, NnTarget::Ip, &table.rows, &cfg(derive_seed(seed, "target", 1)), &s.layers)?;
            json!({ "dp": dp, "ip": ip })
        }
    })
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Outcome> {
    let data = load_prepared(cfg)?;
    let schedule = schedule_for(cfg, &data)?;
    let table = data
        .daily_table()?
        .between(schedule.folds[0].train_start, schedule.test_end);
    let dir = cfg.output_dir.join("models");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut outputs = Vec::new();
    let mut failed = Vec::new();
    for entry in &cfg.models {
        match fit_entry(entry, &table, derive_seed(cfg.seed, &entry.id, u64::MAX)) {
            Ok(v) => {
                let path = dir.join(format!("{}.json", entry.id));
                save_json(&path, &v)?;
                outputs.push(path);
            }
            Err(e) => {
                log::error!("model {} failed: {e}", entry.id);
                failed.push(entry.id.clone());
            }
        }
    }
    finish("fit", cfg, outputs, failed)
}

pub fn cmd_backtest(cfg: &RunConfig) -> Result<Outcome> {
    let data = load_prepared(cfg)?;
    let schedule = schedule_for(cfg, &data)?;
    let table = data.daily_table()?;
    let models: Vec<Box<dyn Forecaster>> = cfg.models.iter().map(build_forecaster).collect::<Result<_>>()?;
    log::info!(
        "backtesting {} models over {} folds ({} to {})",
        models.len(),
        schedule.folds.len(),
        schedule.initial_train_end,
        schedule.test_end
    );
    let outcome = run_backtest(&models, &schedule, &table, &cfg.backtest_options())?;
    let report_path = cfg.output_dir.join("report.json");
    let forecasts_path = cfg.output_dir.join("forecasts.csv");
    write_report_json(&outcome.report, &report_path)?;
    write_forecasts_csv(&outcome.forecasts, &forecasts_path)?;
    let failed = outcome.report.failures.keys().cloned().collect();
    finish("backtest", cfg, vec![report_path, forecasts_path], failed)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<Outcome> {
    let report = read_report_json(cfg.output_dir.join("report.json"))?;
    let figures = cfg.output_dir.join("figures");
    write_figures(&report, &figures)?;
    let summary = cfg.output_dir.join("summary.md");
    std::fs::write(&summary, render_summary(&report)).map_err(|e| Error::io(&summary, e))?;
    finish("report", cfg, vec![figures, summary], Vec::new())
}
