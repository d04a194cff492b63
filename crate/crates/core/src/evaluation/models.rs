//! Roster entries and the forecasters they build.

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::backtest::{derive_seed, DayForecast, FoldData, FoldOutput};
use crate::baselines::{fit_ar, persistence_forecast, DEFAULT_MAX_P};
use crate::error::{Error, Result};
use crate::features::{peak_of, DailyRow, HighResRow};
use crate::gam_engine::{self, FitOptions, Family, Frame, ModelSpec, Response};
use crate::ingest::SLOTS_PER_DAY;
use crate::nn_engine::arch::{ArchConfig, NeuralModel};
use crate::nn_engine::{Architecture, Loss, NnTarget, Optimizer, TrainConfig};
use crate::smooth_basis::SmoothTerm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    High,
    Low,
    Multi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelClass {
    Persistence,
    Ar,
    Gam,
    Nn,
}

/// Training settings for neural roster entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NnSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub layers: ArchConfig,
}

impl Default for NnSettings {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            layers: ArchConfig::default(),
        }
    }
}

impl NnSettings {
    fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed,
            loss: Loss::Mse,
        }
    }
}

/// One roster entry as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub id: String,
    pub class: ModelClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<Resolution>,
    /// GAM response family; `ocat` forecasts the peak instant, the others
    /// the peak magnitude.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<Family>,
    /// Categorical covariates of a GAM (defaults per resolution).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parametric: Option<Vec<String>>,
    /// Smooth terms of a GAM (defaults per resolution).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<SmoothTerm>>,
    /// Largest autoregressive order considered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_order: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nn: Option<NnSettings>,
}

/// Identifiers of the built-in roster.
pub const MODEL_IDS: [&str; 15] = [
    "persistence",
    "HR-arima",
    "HR-gauss",
    "HR-FCNN",
    "LR-arima",
    "LR-gauss",
    "LR-scat",
    "LR-gev",
    "LR-ocat",
    "LR-FCNN",
    "MR-gauss",
    "MR-scat",
    "MR-gev",
    "MR-ocat",
    "MR-CNN",
];

impl ModelEntry {
    fn new(id: &str, class: ModelClass, resolution: Option<Resolution>, family: Option<Family>) -> Self {
        Self {
            id: id.into(),
            class,
            resolution,
            family,
            parametric: None,
            terms: None,
            max_order: None,
            nn: None,
        }
    }

    /// The built-in entry for one of [`MODEL_IDS`], with default terms made
    /// explicit.
    pub fn builtin(id: &str) -> Result<Self> {
        use ModelClass::*;
        use Resolution::*;
        let mut e = match id {
            "persistence" => Self::new(id, Persistence, None, None),
            "HR-arima" => Self::new(id, Ar, Some(High), None),
            "LR-arima" => Self::new(id, Ar, Some(Low), None),
            "HR-gauss" => Self::new(id, Gam, Some(High), Some(Family::Gaussian)),
            "LR-gauss" => Self::new(id, Gam, Some(Low), Some(Family::Gaussian)),
            "LR-scat" => Self::new(id, Gam, Some(Low), Some(Family::ScaledT)),
            "LR-gev" => Self::new(id, Gam, Some(Low), Some(Family::Gev)),
            "LR-ocat" => Self::new(id, Gam, Some(Low), Some(Family::Ocat)),
            "MR-gauss" => Self::new(id, Gam, Some(Multi), Some(Family::Gaussian)),
            "MR-scat" => Self::new(id, Gam, Some(Multi), Some(Family::ScaledT)),
            "MR-gev" => Self::new(id, Gam, Some(Multi), Some(Family::Gev)),
            "MR-ocat" => Self::new(id, Gam, Some(Multi), Some(Family::Ocat)),
            "HR-FCNN" => Self::new(id, Nn, Some(High), None),
            "LR-FCNN" => Self::new(id, Nn, Some(Low), None),
            "MR-CNN" => Self::new(id, Nn, Some(Multi), None),
            other => return Err(Error::Config(format!("unknown model id `{other}`"))),
        };
        match e.class {
            Gam => {
                let spec = e.gam_spec()?;
                e.parametric = Some(spec.parametric);
                e.terms = Some(spec.smooths);
            }
            Ar => e.max_order = Some(DEFAULT_MAX_P),
            Nn => e.nn = Some(NnSettings::default()),
            Persistence => {}
        }
        Ok(e)
    }

    fn resolution(&self) -> Result<Resolution> {
        self.resolution
            .ok_or_else(|| Error::Config(format!("model `{}` needs a resolution", self.id)))
    }

    /// The GAM specification this entry describes.
    pub fn gam_spec(&self) -> Result<ModelSpec> {
        let family = self
            .family
            .ok_or_else(|| Error::Config(format!("GAM `{}` needs a family", self.id)))?;
        let response = if family == Family::Ocat { Response::Ip } else { Response::Dp };
        let mut spec = match self.resolution()? {
            Resolution::High if family == Family::Gaussian => ModelSpec::highres_gaussian(),
            Resolution::High => {
                return Err(Error::Config(format!(
                    "GAM `{}`: half-hourly models use the gaussian family",
                    self.id
                )))
            }
            Resolution::Low => ModelSpec::lowres(family, response),
            Resolution::Multi => ModelSpec::multires(family, response),
        };
        if let Some(p) = &self.parametric {
            spec.parametric = p.clone();
        }
        if let Some(t) = &self.terms {
            spec.smooths = t.clone();
        }
        spec.validate().map_err(|e| Error::Config(format!("GAM `{}`: {e}", self.id)))?;
        Ok(spec)
    }
}

/// A model evaluated by the backtest: fit on a fold's training days and
/// forecast its test days.
pub trait Forecaster: Send + Sync {
    fn id(&self) -> &str;
    fn forecast(&self, fold: &FoldData, seed: u64) -> Result<FoldOutput>;
}

/// Build the forecaster for a roster entry, validating its settings.
pub fn build_forecaster(entry: &ModelEntry) -> Result<Box<dyn Forecaster>> {
    let id = entry.id.clone();
    Ok(match entry.class {
        ModelClass::Persistence => Box::new(PersistenceModel { id }),
        ModelClass::Ar => Box::new(ArForecaster {
            id,
            resolution: entry.resolution()?,
            max_p: entry.max_order.unwrap_or(DEFAULT_MAX_P),
        }),
        ModelClass::Gam => {
            let spec = entry.gam_spec()?;
            Box::new(GamForecaster {
                id,
                high: spec.response == Response::HalfhourlyLoad,
                spec,
            })
        }
        ModelClass::Nn => {
            let settings = entry.nn.clone().unwrap_or_default();
            settings
                .train_config(0)
                .validate()
                .map_err(|e| Error::Config(format!("model `{id}`: {e}")))?;
            let arch = match entry.resolution()? {
                Resolution::High => Architecture::HrFcnn,
                Resolution::Low => Architecture::LrFcnn,
                Resolution::Multi => Architecture::MrCnn,
            };
            Box::new(NnForecaster { id, arch, settings })
        }
    })
}

struct PersistenceModel {
    id: String,
}

impl Forecaster for PersistenceModel {
    fn id(&self) -> &str {
        &self.id
    }

    fn forecast(&self, fold: &FoldData, _seed: u64) -> Result<FoldOutput> {
        let test = fold.test();
        Ok(FoldOutput::new(
            test.rows
                .iter()
                .zip(persistence_forecast(test))
                .map(|(r, (dp, ip))| DayForecast::both(r.date, dp, ip))
                .collect(),
        ))
    }
}

/// Rolls `history` forward to the day before each test row, using only the
/// lagged values carried by the test rows themselves.
fn roll_history<T: Clone>(
    mut history: Vec<T>,
    mut last: NaiveDate,
    rows: &[DailyRow],
    lagged: impl Fn(&DailyRow) -> T,
    mut each: impl FnMut(&DailyRow, &[T]) -> Result<()>,
) -> Result<()> {
    for r in rows {
        let prev = r.date - Duration::days(1);
        if prev > last {
            history.push(lagged(r));
            last = prev;
        }
        each(r, &history)?;
    }
    Ok(())
}

struct ArForecaster {
    id: String,
    resolution: Resolution,
    max_p: usize,
}

impl Forecaster for ArForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn forecast(&self, fold: &FoldData, _seed: u64) -> Result<FoldOutput> {
        let (train, test) = (fold.train(), fold.test());
        let last = train
            .rows
            .last()
            .map(|r| r.date)
            .ok_or_else(|| Error::InsufficientData("no training days".into()))?;
        let mut out = Vec::with_capacity(test.len());
        match self.resolution {
            Resolution::High => {
                let models = (0..SLOTS_PER_DAY)
                    .map(|s| {
                        let series: Vec<f64> = train.rows.iter().map(|r| r.demand[s]).collect();
                        fit_ar(&series, self.max_p)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let history: Vec<Vec<f64>> = train.rows.iter().map(|r| r.demand.clone()).collect();
                roll_history(history, last, &test.rows, |r| r.mat_lag.clone(), |r, h| {
                    let day = models
                        .iter()
                        .enumerate()
                        .map(|(s, m)| {
                            let series: Vec<f64> = h.iter().map(|d| d[s]).collect();
                            m.forecast_next(&series)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    let (dp, ip) = peak_of(&day);
                    out.push(DayForecast::both(r.date, dp, ip));
                    Ok(())
                })?;
            }
            _ => {
                let model = fit_ar(&train.dp(), self.max_p)?;
                roll_history(train.dp(), last, &test.rows, |r| r.dp24, |r, h| {
                    out.push(DayForecast::dp(r.date, model.forecast_next(h)?));
                    Ok(())
                })?;
            }
        }
        Ok(FoldOutput::new(out))
    }
}

/// Half-hourly rows of whole days, derived from daily rows.
fn highres_of(rows: &[DailyRow]) -> Vec<HighResRow> {
    rows.iter()
        .flat_map(|r| {
            (0..SLOTS_PER_DAY).map(move |t| HighResRow {
                date: r.date,
                t,
                load: r.demand.get(t).copied().unwrap_or(f64::NAN),
                temp: r.mat_tem[t],
                temp95: r.mat_tem95[t],
                dow: r.dow,
                toy: r.toy,
                load24: r.mat_lag[t],
            })
        })
        .collect()
}

/// Daily peak and instant of each consecutive 48-slot block.
fn day_peaks(rows: &[DailyRow], loads: &[f64]) -> Vec<DayForecast> {
    rows.iter()
        .zip(loads.chunks(SLOTS_PER_DAY))
        .map(|(r, day)| {
            let (dp, ip) = peak_of(day);
            DayForecast::both(r.date, dp, ip)
        })
        .collect()
}

struct GamForecaster {
    id: String,
    spec: ModelSpec,
    high: bool,
}

impl Forecaster for GamForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn forecast(&self, fold: &FoldData, _seed: u64) -> Result<FoldOutput> {
        let (train, test) = (fold.train(), fold.test());
        let opts = FitOptions::default();
        if self.high {
            let fit = gam_engine::fit(&self.spec, &Frame::from_highres(&highres_of(&train.rows)), &opts)?;
            let pred = fit.predict(&Frame::from_highres(&highres_of(&test.rows)))?;
            return Ok(FoldOutput {
                forecasts: day_peaks(&test.rows, &pred.location),
                aic: Some(fit.aic),
            });
        }
        let fit = gam_engine::fit(&self.spec, &Frame::from_daily(train), &opts)?;
        let pred = fit.predict(&Frame::from_daily(test))?;
        let forecasts = match &pred.category {
            Some(cat) => test.rows.iter().zip(cat).map(|(r, &c)| DayForecast::ip(r.date, c)).collect(),
            None => test
                .rows
                .iter()
                .zip(&pred.location)
                .map(|(r, &m)| DayForecast::dp(r.date, m))
                .collect(),
        };
        Ok(FoldOutput {
            forecasts,
            aic: Some(fit.aic),
        })
    }
}

struct NnForecaster {
    id: String,
    arch: Architecture,
    settings: NnSettings,
}

impl Forecaster for NnForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn forecast(&self, fold: &FoldData, seed: u64) -> Result<FoldOutput> {
        let (train, test) = (fold.train(), fold.test());
        let layers = &self.settings.layers;
        if self.arch == Architecture::HrFcnn {
            let cfg = self.settings.train_config(seed);
            let model = NeuralModel::fit_highres(&highres_of(&train.rows), &cfg, layers)?;
            let loads = model.predict_highres(&highres_of(&test.rows))?;
            return Ok(FoldOutput::new(day_peaks(&test.rows, &loads)));
        }
        let fit = |target: NnTarget, stream: u64| -> Result<Vec<f64>> {
            let cfg = self.settings.train_config(derive_seed(seed, "target", stream));
            NeuralModel::fit_daily(self.arch, target, &train.rows, &cfg, layers)?.predict_daily(&test.rows)
        };
        let dp = fit(NnTarget::Dp, 0)?;
        let ip = fit(NnTarget::Ip, 1)?;
        Ok(FoldOutput::new(
            test.rows
                .iter()
                .zip(dp.iter().zip(&ip))
                .map(|(r, (&d, &i))| DayForecast::both(r.date, d, i as usize))
                .collect(),
        ))
    }
}

/// Half-hourly rows of every day in `table`.
pub fn highres_of_table(table: &crate::features::DailyPeakTable) -> Vec<HighResRow> {
    highres_of(&table.rows)
}
