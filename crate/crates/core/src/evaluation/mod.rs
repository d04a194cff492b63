//! Rolling-origin backtests: the monthly refit schedule, point-forecast
//! metrics, moving-block bootstrap and Diebold–Mariano comparisons.

use chrono::{Months, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

mod backtest;
mod models;
mod output;

pub use backtest::{
    derive_seed, leakage_audit, run_backtest, BacktestOptions, BacktestOutcome, BacktestReport, DayForecast, DmMatrix,
    FoldData, FoldOutput, ForecastRecord, ModelReport, Quantiles, TracePoint, REPORT_SCHEMA_VERSION,
};
pub use models::{
    build_forecaster, highres_of_table, Forecaster, ModelClass, ModelEntry, NnSettings, Resolution, MODEL_IDS,
};
pub use output::{
    read_report_json, render_summary, render_svg_boxplot, render_svg_traces, report_to_json, write_figures,
    write_forecasts_csv, write_report_json,
};

/// Default moving-block length in days.
pub const BLOCK_LENGTH: usize = 7;
/// Default number of bootstrap resamples.
pub const BOOTSTRAP_SAMPLES: usize = 1000;

/// One refit of the rolling origin: train on `[train_start, test_start)`,
/// forecast `[test_start, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub train_start: NaiveDate,
    pub test_start: NaiveDate,
    pub test_end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSchedule {
    pub initial_train_end: NaiveDate,
    pub test_end: NaiveDate,
    pub folds: Vec<Fold>,
}

fn add_months(d: NaiveDate, m: u32) -> Result<NaiveDate> {
    d.checked_add_months(Months::new(m))
        .ok_or_else(|| Error::Parameter(format!("date overflow adding {m} months to {d}")))
}

/// Expanding-window schedule over `[start, end)`: the first fold trains on
/// `initial_months` and each later fold adds `refit_months`. A trailing
/// partial period becomes a shorter last fold so test spans tile
/// `[initial_train_end, end)` exactly.
pub fn build_schedule(start: NaiveDate, end: NaiveDate, initial_months: u32, refit_months: u32) -> Result<RollingSchedule> {
    if initial_months == 0 || refit_months == 0 {
        return Err(Error::Parameter("initial and refit periods must be positive".into()));
    }
    let initial_train_end = add_months(start, initial_months)?;
    if add_months(initial_train_end, 1)? > end {
        return Err(Error::InsufficientData(format!(
            "span [{start}, {end}) is shorter than {initial_months} training months plus one test month"
        )));
    }
    let mut folds = Vec::new();
    let mut test_start = initial_train_end;
    while test_start < end {
        let test_end = add_months(test_start, refit_months)?.min(end);
        folds.push(Fold {
            index: folds.len(),
            train_start: start,
            test_start,
            test_end,
        });
        test_start = test_end;
    }
    Ok(RollingSchedule {
        initial_train_end,
        test_end: end,
        folds,
    })
}

fn check_lengths(f: usize, a: usize) -> Result<()> {
    if f != a {
        return Err(Error::Metric(format!("forecast length {f} differs from actual length {a}")));
    }
    if f == 0 {
        return Err(Error::Metric("no forecasts to score".into()));
    }
    Ok(())
}

/// Mean absolute percentage error in percent.
pub fn mape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(forecast.len(), actual.len())?;
    let mut s = 0.0;
    for (f, a) in forecast.iter().zip(actual) {
        if !(*a > 0.0) {
            return Err(Error::Metric(format!("MAPE needs positive actuals, got {a}")));
        }
        s += ((a - f) / a).abs();
    }
    Ok(100.0 * s / actual.len() as f64)
}

pub fn mae(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(forecast.len(), actual.len())?;
    Ok(forecast.iter().zip(actual).map(|(f, a)| (a - f).abs()).sum::<f64>() / actual.len() as f64)
}

pub fn rmse(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    check_lengths(forecast.len(), actual.len())?;
    Ok((forecast.iter().zip(actual).map(|(f, a)| (a - f).powi(2)).sum::<f64>() / actual.len() as f64).sqrt())
}

/// Percentage of days whose forecast slot is within 2 slots of the actual.
pub fn r_accuracy(forecast: &[usize], actual: &[usize]) -> Result<f64> {
    check_lengths(forecast.len(), actual.len())?;
    let hits = forecast.iter().zip(actual).filter(|(f, a)| f.abs_diff(**a) <= 2).count();
    Ok(100.0 * hits as f64 / actual.len() as f64)
}

/// How the per-day gap between the peak and the demand at the forecast
/// instant is aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DRmseVariant {
    /// Root of the mean squared gap.
    #[default]
    Squared,
    /// Root of the mean plain gap (the gap is never negative).
    Literal,
}

/// Gap between each day's peak and its demand at the forecast instant.
pub fn peak_gaps(forecast: &[usize], demand: &[Vec<f64>]) -> Result<Vec<f64>> {
    check_lengths(forecast.len(), demand.len())?;
    forecast
        .iter()
        .zip(demand)
        .map(|(&f, day)| {
            let peak = day.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            day.get(f)
                .map(|v| peak - v)
                .ok_or_else(|| Error::Metric(format!("slot {f} outside a {}-slot day", day.len())))
        })
        .collect()
}

pub fn d_rmse(forecast: &[usize], demand: &[Vec<f64>], variant: DRmseVariant) -> Result<f64> {
    let gaps = peak_gaps(forecast, demand)?;
    let n = gaps.len() as f64;
    Ok(match variant {
        DRmseVariant::Squared => (gaps.iter().map(|g| g * g).sum::<f64>() / n).sqrt(),
        DRmseVariant::Literal => (gaps.iter().sum::<f64>() / n).sqrt(),
    })
}

/// Metrics reported per model. Each is an aggregate of a per-day loss, so
/// pooling across folds and resampling days both work on the loss series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    DpMape,
    DpMae,
    DpRmse,
    IpRAccuracy,
    IpMae,
    IpDRmse,
}

impl Metric {
    pub const DP: [Metric; 3] = [Metric::DpMape, Metric::DpMae, Metric::DpRmse];
    pub const IP: [Metric; 3] = [Metric::IpRAccuracy, Metric::IpMae, Metric::IpDRmse];

    pub fn key(&self) -> &'static str {
        match self {
            Metric::DpMape => "dp_mape",
            Metric::DpMae => "dp_mae",
            Metric::DpRmse => "dp_rmse",
            Metric::IpRAccuracy => "ip_r_accuracy",
            Metric::IpMae => "ip_mae",
            Metric::IpDRmse => "ip_d_rmse",
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Metric::DpMape => "DP MAPE [%]",
            Metric::DpMae => "DP MAE [MW]",
            Metric::DpRmse => "DP RMSE [MW]",
            Metric::IpRAccuracy => "IP R-Accuracy [%]",
            Metric::IpMae => "IP MAE [half-hours]",
            Metric::IpDRmse => "IP d-RMSE [MW]",
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, Metric::IpRAccuracy)
    }

    pub fn is_dp(&self) -> bool {
        Metric::DP.contains(self)
    }

    /// Whether the aggregate is the root of the mean loss.
    fn rooted(&self) -> bool {
        matches!(self, Metric::DpRmse | Metric::IpDRmse)
    }

    /// Aggregate a per-day loss series into the metric value.
    pub fn aggregate(&self, losses: &[f64]) -> f64 {
        let m = losses.iter().sum::<f64>() / losses.len() as f64;
        if self.rooted() {
            m.sqrt()
        } else {
            m
        }
    }
}

/// Moving-block bootstrap of a per-day loss series. Each of the `k`
/// resamples concatenates `ceil(n / block)` blocks of consecutive days with
/// uniformly drawn starts, truncated to `n`, and is reduced by `stat`.
pub fn block_bootstrap(
    losses: &[f64],
    block: usize,
    k: usize,
    seed: u64,
    stat: impl Fn(&[f64]) -> f64,
) -> Result<Vec<f64>> {
    let n = losses.len();
    if block == 0 || n < block {
        return Err(Error::InsufficientData(format!(
            "block bootstrap needs at least {block} observations, got {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts = n - block + 1;
    let mut buf = Vec::with_capacity(n + block);
    Ok((0..k)
        .map(|_| {
            buf.clear();
            while buf.len() < n {
                let s = rng.gen_range(0..starts);
                buf.extend_from_slice(&losses[s..s + block]);
            }
            buf.truncate(n);
            stat(&buf)
        })
        .collect())
}

/// Linear-interpolation sample quantile (`q` in [0, 1]).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    /// The loss differential had zero variance; the test is uninformative.
    pub degenerate: bool,
}

/// One-step Diebold–Mariano test of equal expected loss with the
/// Harvey–Leybourne–Newbold correction and a Student-t(n−1) reference.
/// Positive statistics mean `loss_a` is larger on average.
pub fn dm_test(loss_a: &[f64], loss_b: &[f64]) -> Result<DmResult> {
    let n = loss_a.len();
    if n != loss_b.len() {
        return Err(Error::Metric(format!("loss series lengths differ: {n} vs {}", loss_b.len())));
    }
    if n < 10 {
        return Err(Error::InsufficientData(format!("DM test needs at least 10 paired losses, got {n}")));
    }
    let d: Vec<f64> = loss_a.iter().zip(loss_b).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let gamma0 = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    // a constant differential leaves only rounding noise in the variance
    let scale = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if gamma0 <= (1e-14 * scale).powi(2) {
        return Ok(DmResult {
            statistic: 0.0,
            p_value: 1.0,
            degenerate: true,
        });
    }
    let h = 1.0;
    let correction = ((nf + 1.0 - 2.0 * h + h * (h - 1.0) / nf) / nf).sqrt();
    let statistic = correction * mean / (gamma0 / nf).sqrt();
    let t = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::Metric(e.to_string()))?;
    let p_value = (2.0 * t.sf(statistic.abs())).clamp(0.0, 1.0);
    Ok(DmResult {
        statistic,
        p_value,
        degenerate: false,
    })
}
