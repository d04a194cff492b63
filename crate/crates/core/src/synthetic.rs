//! Seeded generator of realistic demand and weather-station records.
//!
//! Temperatures follow an annual cycle, a diurnal cycle, a persistent daily
//! weather anomaly and station offsets. Demand combines a weekly and annual
//! level, a two-humped intraday profile whose evening peak drifts with the
//! season, and a heating response to the smoothed temperature whose strength
//! depends on the time of day — so the intraday temperature path, not only
//! its daily extremes, matters for the daily peak.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    exponential_smooth, population_weighted_temperature, HalfHourlySeries, PreparedData, StationSeries,
    SLOTS_PER_DAY, TEMP_SMOOTHING,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub start: NaiveDate,
    pub days: usize,
    pub seed: u64,
    /// Station identifiers and population weights.
    pub stations: Vec<(String, f64)>,
    /// Mean demand level in MW.
    pub base_load: f64,
    /// Heating response in MW per degree below the comfort temperature.
    pub heating: f64,
    /// Standard deviation of the half-hourly demand noise in MW.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2011, 7, 1).expect("valid date"),
            days: 3 * 365,
            seed: 1,
            stations: vec![
                ("london".into(), 0.5),
                ("birmingham".into(), 0.3),
                ("glasgow".into(), 0.2),
            ],
            base_load: 32_000.0,
            heating: 600.0,
            noise: 250.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub load: HalfHourlySeries,
    pub stations: Vec<StationSeries>,
}

const COMFORT: f64 = 16.0;

/// Slot-dependent weight of the heating response: strongest through the
/// evening, weakest overnight.
pub fn heating_profile(slot: usize) -> f64 {
    let h = slot as f64 / 2.0;
    0.35 + 0.65 * (-((h - 18.0) / 3.0).powi(2)).exp() + 0.3 * (-((h - 8.0) / 2.0).powi(2)).exp()
}

/// Intraday demand shape (fraction of the base level) on `date`. The
/// evening hump moves later and flattens as days lengthen.
pub fn intraday_shape(date: NaiveDate, slot: usize) -> f64 {
    let h = slot as f64 / 2.0;
    let season = (2.0 * PI * (date.ordinal0() as f64 - 355.0) / 365.25).cos(); // 1 at midwinter
    let evening_centre = 18.0 - 0.75 * season;
    let evening = (0.18 + 0.12 * season) * (-((h - evening_centre) / 1.6).powi(2)).exp();
    let morning = 0.06 * (-((h - 8.5) / 1.5).powi(2)).exp();
    let daytime = 0.14 * (-((h - 13.0) / 4.0).powi(2)).exp();
    let night = -0.22 * (-((h - 3.5) / 2.5).powi(2)).exp();
    1.0 + morning + daytime + evening + night
}

fn weekly_factor(date: NaiveDate) -> f64 {
    match date.weekday().num_days_from_monday() {
        5 => 0.90,
        6 => 0.86,
        0 => 0.99,
        _ => 1.0,
    }
}

impl SyntheticData {
    pub fn generate(cfg: &SyntheticConfig) -> Result<Self> {
        if cfg.days < 2 || cfg.stations.is_empty() {
            return Err(Error::Parameter("synthetic data needs at least 2 days and 1 station".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let unit = Normal::new(0.0, 1.0).expect("valid normal");
        let hours = cfg.days * 24;
        // shared weather anomaly: AR(1) over days, interpolated linearly over hours
        let mut anomaly_days = Vec::with_capacity(cfg.days + 1);
        let mut a = 0.0;
        for _ in 0..=cfg.days {
            a = 0.7 * a + 2.0 * unit.sample(&mut rng);
            anomaly_days.push(a);
        }
        let start = cfg.start.and_hms_opt(0, 0, 0).expect("midnight");
        let mut stations = Vec::new();
        for (k, (id, w)) in cfg.stations.iter().enumerate() {
            let offset = 1.5 - 1.5 * k as f64;
            let values: Vec<f64> = (0..hours)
                .map(|i| {
                    let t = start + Duration::hours(i as i64);
                    let doy = t.date().ordinal0() as f64;
                    let hour = i % 24;
                    let d = i / 24;
                    let frac = hour as f64 / 24.0;
                    let anomaly = anomaly_days[d] * (1.0 - frac) + anomaly_days[d + 1] * frac;
                    10.5 - 6.5 * (2.0 * PI * (doy - 15.0) / 365.25).cos()
                        + 3.5 * (2.0 * PI * (hour as f64 - 9.0) / 24.0).sin()
                        + anomaly
                        + offset
                        + 0.4 * unit.sample(&mut rng)
                })
                .collect();
            stations.push(StationSeries::new(id.clone(), *w, start, values)?);
        }
        let temp = population_weighted_temperature(&stations)?;
        let temp95 = exponential_smooth(&temp, TEMP_SMOOTHING)?;
        let mut load = Vec::with_capacity(cfg.days * SLOTS_PER_DAY);
        let mut day_level = 0.0;
        for d in 0..cfg.days {
            let date = cfg.start + Duration::days(d as i64);
            let doy = date.ordinal0() as f64;
            day_level = 0.6 * day_level + 0.012 * unit.sample(&mut rng);
            let annual = 1.0 + 0.06 * (2.0 * PI * (doy - 15.0) / 365.25).cos();
            let level = cfg.base_load * annual * weekly_factor(date) * (1.0 + day_level);
            for s in 0..SLOTS_PER_DAY {
                let i = d * SLOTS_PER_DAY + s;
                let cold = (COMFORT - temp95.values[i]).max(0.0);
                let v = level * intraday_shape(date, s) + cfg.heating * heating_profile(s) * cold
                    + cfg.noise * unit.sample(&mut rng);
                load.push(v);
            }
        }
        Ok(Self {
            load: HalfHourlySeries::new(cfg.start, load)?,
            stations,
        })
    }

    pub fn prepared(&self) -> Result<PreparedData> {
        PreparedData::from_sources(self.load.clone(), &self.stations, TEMP_SMOOTHING)
    }

    /// Write `demand.csv` (timestamp, load_mw) and one `<station>.csv`
    /// (timestamp, temp_c) per station into `dir`; returns the paths.
    pub fn write_raw(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, Vec<PathBuf>)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let demand = dir.join("demand.csv");
        write_two_columns(
            &demand,
            "timestamp,load_mw",
            (0..self.load.len()).map(|i| (self.load.timestamp(i), self.load.values[i])),
        )?;
        let mut paths = Vec::new();
        for s in &self.stations {
            let p = dir.join(format!("{}.csv", s.station_id));
            write_two_columns(&p, "timestamp,temp_c", (0..s.values.len()).map(|i| (s.timestamp(i), s.values[i])))?;
            paths.push(p);
        }
        Ok((demand, paths))
    }
}

fn write_two_columns(
    path: &Path,
    header: &str,
    rows: impl Iterator<Item = (NaiveDateTime, f64)>,
) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{header}").map_err(io)?;
    for (t, v) in rows {
        writeln!(w, "{},{:.3}", t.format("%Y-%m-%dT%H:%M:%S"), v).map_err(io)?;
    }
    w.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_demand_csv, load_station_csv, CsvSchema, LoadOptions};

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            days: 60,
            ..Default::default()
        }
    }

    #[test]
    fn generation_is_seeded() {
        let a = SyntheticData::generate(&small()).unwrap();
        let b = SyntheticData::generate(&small()).unwrap();
        assert_eq!(a, b);
        let c = SyntheticData::generate(&SyntheticConfig { seed: 2, ..small() }).unwrap();
        assert_ne!(a.load.values, c.load.values);
    }

    #[test]
    fn values_are_plausible() {
        let d = SyntheticData::generate(&SyntheticConfig {
            days: 365,
            ..Default::default()
        })
        .unwrap();
        let (lo, hi) = d.load.values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        assert!(lo > 15_000.0 && hi < 60_000.0, "{lo} {hi}");
        let peaks = crate::features::daily_peaks(&d.load).unwrap();
        // evening peaks outside high summer, midday peaks otherwise
        let evening = peaks.iter().filter(|p| (30..42).contains(&p.1)).count();
        assert!(evening as f64 > 0.6 * peaks.len() as f64, "{evening}");
        assert!(evening < peaks.len());
    }

    #[test]
    fn raw_files_round_trip_through_ingest() {
        let d = SyntheticData::generate(&small()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (demand, stations) = d.write_raw(dir.path()).unwrap();
        let load = load_demand_csv(&demand, &LoadOptions::default()).unwrap();
        assert_eq!(load.n_days(), 60);
        assert!(load.values.iter().zip(&d.load.values).all(|(a, b)| (a - b).abs() < 1e-3));
        let s = load_station_csv(&stations[0], "london", 0.5, &LoadOptions { schema: CsvSchema::weather(), ..Default::default() }).unwrap();
        assert_eq!(s.values.len(), 60 * 24);
    }
}
