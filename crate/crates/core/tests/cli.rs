mod common;

use std::collections::HashMap;

use common::{run_cli, synthetic_workspace};
use peakcast::config::RunConfig;

fn read(path: impl AsRef<std::path::Path>) -> Vec<u8> {
    std::fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn records(path: impl AsRef<std::path::Path>) -> Vec<HashMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().map(String::from).zip(rec.unwrap().iter().map(String::from)).collect())
        .collect()
}

#[test]
fn prepare_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_workspace(dir.path(), 120, &["persistence"]);
    let cfg = cfg.to_str().unwrap();
    assert_eq!(run_cli(&["prepare", "--config", cfg]), 0);
    let out = dir.path().join("out");
    let first: Vec<Vec<u8>> = ["prepared.csv", "daily.csv", "highres.csv"]
        .iter()
        .map(|f| read(out.join(f)))
        .collect();
    assert_eq!(run_cli(&["prepare", "--config", cfg]), 0);
    for (f, bytes) in ["prepared.csv", "daily.csv", "highres.csv"].iter().zip(&first) {
        assert_eq!(&read(out.join(f)), bytes, "{f} changed between runs");
    }
    assert!(out.join("manifest_prepare.json").exists());
}

#[test]
fn missing_station_file_is_a_config_error_naming_the_station() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = synthetic_workspace(dir.path(), 60, &["persistence"]);
    let cfg = RunConfig::load(&cfg_path).unwrap();
    let victim = &cfg.data.stations[1];
    std::fs::remove_file(&victim.path).unwrap();
    let err = peakcast::cli::prepare_data(&cfg).unwrap_err();
    assert!(err.to_string().contains(&victim.id), "{err}");
    assert_eq!(err.exit_code(), 1);
    assert_eq!(run_cli(&["prepare", "--config", cfg_path.to_str().unwrap()]), 1);
}

#[test]
fn backtest_without_prepared_data_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_workspace(dir.path(), 60, &["persistence"]);
    assert_eq!(run_cli(&["backtest", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn empty_roster_and_unknown_models_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_workspace(dir.path(), 60, &["persistence"]);
    let text = std::fs::read_to_string(&cfg).unwrap();
    let start = text.find("[[models]]").unwrap();
    let empty = dir.path().join("empty.toml");
    std::fs::write(&empty, format!("{}models = []\n", &text[..start])).unwrap();
    assert_eq!(run_cli(&["prepare", "--config", empty.to_str().unwrap()]), 1);
    assert_eq!(run_cli(&["prepare", "--config", cfg.to_str().unwrap(), "--models", "nope"]), 1);
    assert_eq!(run_cli(&["prepare", "--config", dir.path().join("absent.toml").to_str().unwrap()]), 1);
}

#[test]
fn persistence_backtest_matches_yesterdays_peak_and_reports_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_workspace(dir.path(), 430, &["persistence", "LR-arima"]);
    let cfg = cfg.to_str().unwrap();
    let out = dir.path().join("out");
    assert_eq!(run_cli(&["prepare", "--config", cfg]), 0);
    assert_eq!(run_cli(&["backtest", "--config", cfg, "--models", "persistence"]), 0);

    let daily: HashMap<String, HashMap<String, String>> = records(out.join("daily.csv"))
        .into_iter()
        .map(|r| (r["date"].clone(), r))
        .collect();
    let forecasts = records(out.join("forecasts.csv"));
    assert!(forecasts.len() > 30);
    for f in &forecasts {
        let row = &daily[&f["date"]];
        let close = |a: &str, b: &str| (a.parse::<f64>().unwrap() - b.parse::<f64>().unwrap()).abs() < 1e-9;
        assert!(close(&f["dp_forecast"], &row["DP24"]), "{f:?}");
        assert!(close(&f["dp_actual"], &row["DP"]), "{f:?}");
        assert_eq!(f["ip_forecast"], row["IP24"]);
    }

    assert_eq!(run_cli(&["report", "--config", cfg]), 0);
    let summary = read(out.join("summary.md"));
    let report = read(out.join("report.json"));
    assert!(out.join("figures").join("cumulative_dp_mape.svg").exists());
    assert_eq!(run_cli(&["backtest", "--config", cfg, "--models", "persistence"]), 0);
    assert_eq!(run_cli(&["report", "--config", cfg]), 0);
    assert_eq!(read(out.join("report.json")), report);
    assert_eq!(read(out.join("summary.md")), summary);

    assert_eq!(run_cli(&["fit", "--config", cfg]), 0);
    let ar: serde_json::Value = serde_json::from_slice(&read(out.join("models").join("LR-arima.json"))).unwrap();
    assert!(ar["order"].as_u64().unwrap() >= 1);
}

#[test]
fn report_rejects_a_foreign_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = synthetic_workspace(dir.path(), 60, &["persistence"]);
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("report.json"), r#"{"schema_version": 999}"#).unwrap();
    assert_eq!(run_cli(&["report", "--config", cfg.to_str().unwrap()]), 1);
}
