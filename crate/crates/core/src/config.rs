//! Declarative run configuration (TOML) and run manifests.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evaluation::{build_forecaster, BacktestOptions, DRmseVariant, ModelEntry, BLOCK_LENGTH, BOOTSTRAP_SAMPLES};
use crate::ingest::{CsvSchema, GapFill, LoadOptions, TEMP_SMOOTHING};

/// The configuration reproducing the reference study: five years of
/// demand, ten weather stations and the full model roster.
pub const REFERENCE_CONFIG: &str = include_str!("../configs/reference.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    pub id: String,
    pub path: PathBuf,
    #[serde(alias = "weight")]
    pub population: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    /// Half-hourly demand CSV.
    pub demand: PathBuf,
    pub stations: Vec<StationConfig>,
    #[serde(default = "default_demand_schema")]
    pub demand_schema: CsvSchema,
    #[serde(default = "default_weather_schema")]
    pub weather_schema: CsvSchema,
    #[serde(default = "default_gap_fill")]
    pub gap_fill: GapFill,
    #[serde(default = "default_max_gap")]
    pub max_gap: usize,
    /// Exponential smoothing weight of the lagged smoothed temperature.
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
}

fn default_demand_schema() -> CsvSchema {
    CsvSchema::demand()
}
fn default_weather_schema() -> CsvSchema {
    CsvSchema::weather()
}
fn default_gap_fill() -> GapFill {
    LoadOptions::default().gap_fill
}
fn default_max_gap() -> usize {
    LoadOptions::default().max_gap
}
fn default_smoothing() -> f64 {
    TEMP_SMOOTHING
}

impl DataConfig {
    pub fn demand_options(&self) -> LoadOptions {
        LoadOptions {
            schema: self.demand_schema.clone(),
            gap_fill: self.gap_fill,
            max_gap: self.max_gap,
        }
    }

    pub fn weather_options(&self) -> LoadOptions {
        LoadOptions {
            schema: self.weather_schema.clone(),
            gap_fill: self.gap_fill,
            max_gap: self.max_gap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    #[serde(default = "default_initial")]
    pub initial_train_months: u32,
    #[serde(default = "default_refit")]
    pub refit_months: u32,
    /// First day of the backtest span; defaults to the first prepared day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    /// Exclusive end of the backtest span; defaults to the day after the
    /// last prepared day.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
}

fn default_initial() -> u32 {
    12
}
fn default_refit() -> u32 {
    1
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            initial_train_months: default_initial(),
            refit_months: default_refit(),
            start: None,
            end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub bootstrap_samples: usize,
    pub block_length: usize,
    pub d_rmse: DRmseVariant,
    pub scaled_unit_mw: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            bootstrap_samples: BOOTSTRAP_SAMPLES,
            block_length: BLOCK_LENGTH,
            d_rmse: DRmseVariant::Squared,
            scaled_unit_mw: BacktestOptions::default().scaled_unit_mw,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    pub models: Vec<ModelEntry>,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Read a config file; relative data and output paths are taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.demand);
        for s in &mut self.data.stations {
            fix(&mut s.path);
        }
        fix(&mut self.output_dir);
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("the model roster is empty".into()));
        }
        if self.data.stations.is_empty() {
            return Err(Error::Config("at least one weather station is required".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for m in &self.models {
            if !ids.insert(&m.id) {
                return Err(Error::Config(format!("model id `{}` appears twice", m.id)));
            }
            build_forecaster(m)?;
        }
        if self.evaluation.block_length == 0 {
            return Err(Error::Config("bootstrap block length must be positive".into()));
        }
        Ok(())
    }

    /// Keep only the listed models; ids missing from the roster fall back to
    /// the built-in entries.
    pub fn select_models(&mut self, ids: &[String]) -> Result<()> {
        let mut chosen = Vec::with_capacity(ids.len());
        for id in ids {
            match self.models.iter().find(|m| &m.id == id) {
                Some(m) => chosen.push(m.clone()),
                None => chosen.push(ModelEntry::builtin(id)?),
            }
        }
        self.models = chosen;
        self.validate()
    }

    pub fn backtest_options(&self) -> BacktestOptions {
        BacktestOptions {
            seed: self.seed,
            bootstrap_samples: self.evaluation.bootstrap_samples,
            block_length: self.evaluation.block_length,
            d_rmse: self.evaluation.d_rmse,
            scaled_unit_mw: self.evaluation.scaled_unit_mw,
        }
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_toml()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// What a command ran with, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub models: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, outputs: Vec<String>) -> Result<Self> {
        Ok(Self {
            command: command.into(),
            config_hash: cfg.hash()?,
            code_version: env!("CARGO_PKG_VERSION").into(),
            seed: cfg.seed,
            models: cfg.models.iter().map(|m| m.id.clone()).collect(),
            outputs,
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("manifest_{}.json", self.command));
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
