//! Fold data, leakage audit, parallel fold execution and report assembly.

use std::collections::BTreeMap;

use chrono::{Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::models::Forecaster;
use super::{block_bootstrap, dm_test, quantile, DRmseVariant, Fold, Metric, RollingSchedule};
use super::{BLOCK_LENGTH, BOOTSTRAP_SAMPLES};
use crate::error::{Error, Result};
use crate::features::{DailyPeakTable, DailyRow};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Seed for one task, derived from the run seed and a label so parallel
/// scheduling never changes random streams.
pub fn derive_seed(seed: u64, label: &str, stream: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(label.as_bytes()).chain(&stream.to_le_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// What a model sees for one fold: training days strictly before the test
/// span, and test days whose targets (peak, instant, same-day demand) are
/// masked. Test rows still carry same-day temperatures and the previous
/// day's load, which are known when the forecast is issued.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub fold: Fold,
    train: DailyPeakTable,
    test: DailyPeakTable,
}

const MASKED_IP: usize = usize::MAX;

fn masked(r: &DailyRow) -> DailyRow {
    DailyRow {
        dp: f64::NAN,
        ip: MASKED_IP,
        demand: Vec::new(),
        ..r.clone()
    }
}

impl FoldData {
    pub fn new(fold: Fold, table: &DailyPeakTable) -> Self {
        let test = table.between(fold.test_start, fold.test_end);
        Self {
            fold,
            train: table.between(fold.train_start, fold.test_start),
            test: DailyPeakTable {
                rows: test.rows.iter().map(masked).collect(),
                mat_int: test.mat_int,
            },
        }
    }

    pub fn train(&self) -> &DailyPeakTable {
        &self.train
    }

    pub fn test(&self) -> &DailyPeakTable {
        &self.test
    }
}

/// Check that every training row (and the lagged day it carries) precedes
/// the fold's test span and that no test target is visible.
pub fn leakage_audit(data: &FoldData) -> Result<()> {
    let f = &data.fold;
    for r in &data.train.rows {
        if r.date >= f.test_start || r.date < f.train_start {
            return Err(Error::Integrity(format!(
                "fold {}: training row dated {} outside [{}, {})",
                f.index, r.date, f.train_start, f.test_start
            )));
        }
    }
    for r in &data.test.rows {
        if r.date < f.test_start || r.date >= f.test_end {
            return Err(Error::Integrity(format!(
                "fold {}: test row dated {} outside [{}, {})",
                f.index, r.date, f.test_start, f.test_end
            )));
        }
        if !r.dp.is_nan() || r.ip != MASKED_IP || !r.demand.is_empty() {
            return Err(Error::Integrity(format!(
                "fold {}: target of {} is visible to the model",
                f.index, r.date
            )));
        }
    }
    Ok(())
}

/// A model's forecast for one day; either target may be absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DayForecast {
    pub date: NaiveDate,
    pub dp: Option<f64>,
    pub ip: Option<usize>,
}

impl DayForecast {
    pub fn dp(date: NaiveDate, dp: f64) -> Self {
        Self {
            date,
            dp: Some(dp),
            ip: None,
        }
    }

    pub fn ip(date: NaiveDate, ip: usize) -> Self {
        Self {
            date,
            dp: None,
            ip: Some(ip),
        }
    }

    pub fn both(date: NaiveDate, dp: f64, ip: usize) -> Self {
        Self {
            date,
            dp: Some(dp),
            ip: Some(ip),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutput {
    /// One forecast per test day, in test order.
    pub forecasts: Vec<DayForecast>,
    /// AIC of the fitted model, when it has one.
    pub aic: Option<f64>,
}

impl FoldOutput {
    pub fn new(forecasts: Vec<DayForecast>) -> Self {
        Self { forecasts, aic: None }
    }
}

/// One row of `forecasts.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub model_id: String,
    pub dp_forecast: Option<f64>,
    pub dp_actual: f64,
    pub ip_forecast: Option<usize>,
    pub ip_actual: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOptions {
    pub seed: u64,
    pub bootstrap_samples: usize,
    pub block_length: usize,
    pub d_rmse: DRmseVariant,
    /// Megawatts per unit of the scaled MAE/RMSE columns (100 MW, i.e. 0.1 GW).
    pub scaled_unit_mw: f64,
}

impl Default for BacktestOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            bootstrap_samples: BOOTSTRAP_SAMPLES,
            block_length: BLOCK_LENGTH,
            d_rmse: DRmseVariant::Squared,
            scaled_unit_mw: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub q025: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q975: f64,
    pub mean: f64,
}

impl Quantiles {
    pub fn of(samples: &[f64]) -> Self {
        Self {
            q025: quantile(samples, 0.025),
            q25: quantile(samples, 0.25),
            q50: quantile(samples, 0.5),
            q75: quantile(samples, 0.75),
            q975: quantile(samples, 0.975),
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
        }
    }
}

/// Metric computed on all forecasts up to the end of a fold's test span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub month: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    /// Number of forecast days.
    pub days: usize,
    /// window (`all`, `last_year`) → metric key → value.
    pub metrics: BTreeMap<String, BTreeMap<String, f64>>,
    /// Last-year DP MAE and RMSE in reference-table units.
    pub scaled: BTreeMap<String, f64>,
    /// Last-year moving-block bootstrap quantiles per metric.
    pub bootstrap: BTreeMap<String, Quantiles>,
    /// Cumulative metric after each fold.
    pub cumulative: BTreeMap<String, Vec<TracePoint>>,
    /// AIC of each fold's fit (models with a likelihood only).
    pub aic: Vec<Option<f64>>,
}

/// Pairwise DM tests; entry `[i][j]` tests model `i` against model `j`
/// (positive statistic: `i` has the larger loss).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmMatrix {
    pub models: Vec<String>,
    pub days: usize,
    pub statistic: Vec<Vec<Option<f64>>>,
    pub p_value: Vec<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub schema_version: u32,
    pub crate_version: String,
    pub options: BacktestOptions,
    pub schedule: RollingSchedule,
    /// Half-open final-year window `[from, to)`.
    pub last_year: (NaiveDate, NaiveDate),
    pub folds_audited: usize,
    pub models: BTreeMap<String, ModelReport>,
    /// Keyed by loss variant: `abs`, `sq`.
    pub dm: BTreeMap<String, DmMatrix>,
    /// Models aborted by a fold failure, with the diagnostic.
    pub failures: BTreeMap<String, String>,
}

impl BacktestReport {
    pub fn metric(&self, model: &str, window: &str, metric: Metric) -> Option<f64> {
        self.models.get(model)?.metrics.get(window)?.get(metric.key()).copied()
    }
}

/// Report plus the per-day forecasts behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestOutcome {
    pub report: BacktestReport,
    pub forecasts: Vec<ForecastRecord>,
}

fn run_model(model: &dyn Forecaster, folds: &[FoldData], seed: u64) -> Result<Vec<FoldOutput>> {
    folds
        .par_iter()
        .map(|fd| {
            if fd.test().is_empty() {
                return Ok(FoldOutput::new(Vec::new()));
            }
            let out = model
                .forecast(fd, derive_seed(seed, model.id(), fd.fold.index as u64))
                .map_err(|e| Error::Model {
                    model: model.id().into(),
                    reason: format!("fold {} ({}): {e}", fd.fold.index, fd.fold.test_start),
                })?;
            let aligned = out.forecasts.len() == fd.test().len()
                && out.forecasts.iter().zip(&fd.test().rows).all(|(f, r)| f.date == r.date);
            if !aligned {
                return Err(Error::Model {
                    model: model.id().into(),
                    reason: format!(
                        "fold {}: {} forecasts do not align with {} test days",
                        fd.fold.index,
                        out.forecasts.len(),
                        fd.test().len()
                    ),
                });
            }
            if out.forecasts.iter().any(|f| f.dp.is_some_and(|v| !v.is_finite())) {
                return Err(Error::Model {
                    model: model.id().into(),
                    reason: format!("fold {}: non-finite forecast", fd.fold.index),
                });
            }
            Ok(out)
        })
        .collect()
}

/// Per-day losses of `metric` for `recs`, or `None` if the model does not
/// forecast that target.
fn day_losses(
    metric: Metric,
    recs: &[&ForecastRecord],
    rows: &BTreeMap<NaiveDate, &DailyRow>,
    variant: DRmseVariant,
) -> Result<Option<Vec<f64>>> {
    let dp = |r: &ForecastRecord| r.dp_forecast.map(|f| (f, r.dp_actual));
    let ip = |r: &ForecastRecord| r.ip_forecast.map(|f| (f, r.ip_actual));
    let mut out = Vec::with_capacity(recs.len());
    for r in recs {
        let loss = match metric {
            Metric::DpMape => match dp(r) {
                Some((_, a)) if a <= 0.0 => {
                    return Err(Error::Metric(format!("MAPE needs positive actuals; {} has {a}", r.date)))
                }
                Some((f, a)) => 100.0 * ((a - f) / a).abs(),
                None => return Ok(None),
            },
            Metric::DpMae => match dp(r) {
                Some((f, a)) => (a - f).abs(),
                None => return Ok(None),
            },
            Metric::DpRmse => match dp(r) {
                Some((f, a)) => (a - f).powi(2),
                None => return Ok(None),
            },
            Metric::IpRAccuracy => match ip(r) {
                Some((f, a)) => 100.0 * f64::from(u8::from(f.abs_diff(a) <= 2)),
                None => return Ok(None),
            },
            Metric::IpMae => match ip(r) {
                Some((f, a)) => f.abs_diff(a) as f64,
                None => return Ok(None),
            },
            Metric::IpDRmse => match ip(r) {
                Some((f, _)) => {
                    let day = &rows[&r.date].demand;
                    let gap = day.iter().copied().fold(f64::NEG_INFINITY, f64::max) - day[f.min(day.len() - 1)];
                    match variant {
                        DRmseVariant::Squared => gap * gap,
                        DRmseVariant::Literal => gap,
                    }
                }
                None => return Ok(None),
            },
        };
        out.push(loss);
    }
    Ok(Some(out))
}

const ALL_METRICS: [Metric; 6] = [
    Metric::DpMape,
    Metric::DpMae,
    Metric::DpRmse,
    Metric::IpRAccuracy,
    Metric::IpMae,
    Metric::IpDRmse,
];

fn model_report(
    id: &str,
    recs: &[ForecastRecord],
    outputs: &[FoldOutput],
    schedule: &RollingSchedule,
    last_year: (NaiveDate, NaiveDate),
    rows: &BTreeMap<NaiveDate, &DailyRow>,
    opts: &BacktestOptions,
) -> Result<ModelReport> {
    let all: Vec<&ForecastRecord> = recs.iter().collect();
    let last: Vec<&ForecastRecord> = recs.iter().filter(|r| r.date >= last_year.0 && r.date < last_year.1).collect();
    let mut report = ModelReport {
        days: recs.len(),
        metrics: BTreeMap::new(),
        scaled: BTreeMap::new(),
        bootstrap: BTreeMap::new(),
        cumulative: BTreeMap::new(),
        aic: outputs.iter().map(|o| o.aic).collect(),
    };
    for metric in ALL_METRICS {
        for (window, subset) in [("all", &all), ("last_year", &last)] {
            if subset.is_empty() {
                continue;
            }
            if let Some(losses) = day_losses(metric, subset, rows, opts.d_rmse)? {
                report
                    .metrics
                    .entry(window.to_string())
                    .or_default()
                    .insert(metric.key().into(), metric.aggregate(&losses));
                if window == "last_year" && losses.len() >= opts.block_length && opts.bootstrap_samples > 0 {
                    let samples = block_bootstrap(
                        &losses,
                        opts.block_length,
                        opts.bootstrap_samples,
                        derive_seed(opts.seed, &format!("{id}/{}", metric.key()), 0),
                        |s| metric.aggregate(s),
                    )?;
                    report.bootstrap.insert(metric.key().into(), Quantiles::of(&samples));
                }
            }
        }
        let mut trace = Vec::new();
        for fold in &schedule.folds {
            let upto: Vec<&ForecastRecord> = recs.iter().filter(|r| r.date < fold.test_end).collect();
            if upto.is_empty() || !recs.iter().any(|r| r.date >= fold.test_start && r.date < fold.test_end) {
                continue;
            }
            if let Some(losses) = day_losses(metric, &upto, rows, opts.d_rmse)? {
                trace.push(TracePoint {
                    month: fold.test_start.format("%Y-%m").to_string(),
                    value: metric.aggregate(&losses),
                });
            }
        }
        if !trace.is_empty() {
            report.cumulative.insert(metric.key().into(), trace);
        }
    }
    if let Some(m) = report.metrics.get("last_year") {
        for key in [Metric::DpMae.key(), Metric::DpRmse.key()] {
            if let Some(v) = m.get(key) {
                report.scaled.insert(key.into(), v / opts.scaled_unit_mw);
            }
        }
    }
    Ok(report)
}

fn dm_matrices(
    ids: &[String],
    recs: &BTreeMap<String, Vec<ForecastRecord>>,
    last_year: (NaiveDate, NaiveDate),
) -> Result<BTreeMap<String, DmMatrix>> {
    // DP models, compared on the final-year days all of them forecast
    let dp_models: Vec<&String> = ids
        .iter()
        .filter(|id| recs[*id].iter().any(|r| r.dp_forecast.is_some()))
        .collect();
    let in_window = |r: &&ForecastRecord| r.date >= last_year.0 && r.date < last_year.1 && r.dp_forecast.is_some();
    let mut common: Option<Vec<NaiveDate>> = None;
    for id in &dp_models {
        let dates: Vec<NaiveDate> = recs[*id].iter().filter(in_window).map(|r| r.date).collect();
        common = Some(match common {
            None => dates,
            Some(c) => c.into_iter().filter(|d| dates.binary_search(d).is_ok()).collect(),
        });
    }
    let common = common.unwrap_or_default();
    let errors: Vec<Vec<f64>> = dp_models
        .iter()
        .map(|id| {
            recs[*id]
                .iter()
                .filter(|r| common.binary_search(&r.date).is_ok())
                .map(|r| r.dp_actual - r.dp_forecast.unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    let mut out = BTreeMap::new();
    for (variant, loss) in [("abs", f64::abs as fn(f64) -> f64), ("sq", |e: f64| e * e)] {
        let losses: Vec<Vec<f64>> = errors.iter().map(|e| e.iter().map(|&x| loss(x)).collect()).collect();
        let k = dp_models.len();
        let mut statistic = vec![vec![None; k]; k];
        let mut p_value = vec![vec![None; k]; k];
        if common.len() >= 10 {
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        let r = dm_test(&losses[i], &losses[j])?;
                        statistic[i][j] = Some(r.statistic);
                        p_value[i][j] = Some(r.p_value);
                    }
                }
            }
        }
        out.insert(
            variant.to_string(),
            DmMatrix {
                models: dp_models.iter().map(|s| s.to_string()).collect(),
                days: common.len(),
                statistic,
                p_value,
            },
        );
    }
    Ok(out)
}

/// Run every model over every fold. A model whose fit fails on any fold is
/// dropped with a logged diagnostic; the others proceed. Results do not
/// depend on thread count.
pub fn run_backtest(
    models: &[Box<dyn Forecaster>],
    schedule: &RollingSchedule,
    table: &DailyPeakTable,
    opts: &BacktestOptions,
) -> Result<BacktestOutcome> {
    if models.is_empty() {
        return Err(Error::Config("the model roster is empty".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for m in models {
        if !seen.insert(m.id()) {
            return Err(Error::Config(format!("model id `{}` appears twice", m.id())));
        }
    }
    let folds: Vec<FoldData> = schedule.folds.iter().map(|f| FoldData::new(*f, table)).collect();
    for fd in &folds {
        leakage_audit(fd)?;
    }
    let rows: BTreeMap<NaiveDate, &DailyRow> = table.rows.iter().map(|r| (r.date, r)).collect();
    let last_from = schedule
        .test_end
        .checked_sub_months(Months::new(12))
        .unwrap_or(schedule.initial_train_end)
        .max(schedule.initial_train_end);
    let last_year = (last_from, schedule.test_end);

    let results: Vec<Result<Vec<FoldOutput>>> = models
        .par_iter()
        .map(|m| run_model(m.as_ref(), &folds, opts.seed))
        .collect();

    let mut failures = BTreeMap::new();
    let mut records: BTreeMap<String, Vec<ForecastRecord>> = BTreeMap::new();
    let mut outputs_by_model = BTreeMap::new();
    let mut ids = Vec::new();
    for (m, res) in models.iter().zip(results) {
        let id = m.id().to_string();
        match res {
            Err(e) => {
                log::error!("model {id} aborted: {e}");
                failures.insert(id, e.to_string());
            }
            Ok(outputs) => {
                let recs: Vec<ForecastRecord> = outputs
                    .iter()
                    .flat_map(|o| &o.forecasts)
                    .map(|f| {
                        let row = rows[&f.date];
                        ForecastRecord {
                            date: f.date,
                            model_id: id.clone(),
                            dp_forecast: f.dp,
                            dp_actual: row.dp,
                            ip_forecast: f.ip,
                            ip_actual: row.ip,
                        }
                    })
                    .collect();
                records.insert(id.clone(), recs);
                outputs_by_model.insert(id.clone(), outputs);
                ids.push(id);
            }
        }
    }
    ids.sort();
    let mut model_reports = BTreeMap::new();
    for id in &ids {
        let r = model_report(id, &records[id], &outputs_by_model[id], schedule, last_year, &rows, opts)?;
        model_reports.insert(id.clone(), r);
    }
    let dm = dm_matrices(&ids, &records, last_year)?;
    let report = BacktestReport {
        schema_version: REPORT_SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        options: opts.clone(),
        schedule: schedule.clone(),
        last_year,
        folds_audited: folds.len(),
        models: model_reports,
        dm,
        failures,
    };
    Ok(BacktestOutcome {
        report,
        forecasts: records.into_values().flatten().collect(),
    })
}
