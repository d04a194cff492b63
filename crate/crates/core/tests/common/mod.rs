#![allow(dead_code)]

use std::path::{Path, PathBuf};

use peakcast::config::{RunConfig, StationConfig, REFERENCE_CONFIG};
use peakcast::evaluation::ModelEntry;
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

/// Write synthetic raw files and a run config into `dir`; returns the
/// config path.
pub fn synthetic_workspace(dir: &Path, days: usize, models: &[&str]) -> PathBuf {
    let data = SyntheticData::generate(&SyntheticConfig {
        days,
        seed: 11,
        ..Default::default()
    })
    .unwrap();
    let (demand, stations) = data.write_raw(dir.join("raw")).unwrap();
    let mut cfg = RunConfig::from_toml(REFERENCE_CONFIG).unwrap();
    cfg.seed = 5;
    cfg.output_dir = PathBuf::from("out");
    cfg.data.demand = demand.strip_prefix(dir).unwrap().to_path_buf();
    cfg.data.stations = data
        .stations
        .iter()
        .zip(&stations)
        .map(|(s, p)| StationConfig {
            id: s.station_id.clone(),
            path: p.strip_prefix(dir).unwrap().to_path_buf(),
            population: s.population_weight,
        })
        .collect();
    cfg.evaluation.bootstrap_samples = 200;
    cfg.models = models.iter().map(|id| ModelEntry::builtin(id).unwrap()).collect();
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path
}

pub fn run_cli(args: &[&str]) -> i32 {
    peakcast::cli::main_with_args(std::iter::once("peakcast").chain(args.iter().copied()))
}
