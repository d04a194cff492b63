//! Daily and half-hourly feature tables.
//!
//! The daily table holds one row per retained day with the peak targets,
//! daily aggregates of temperature, yesterday's peak, and the three 48-long
//! intraday covariate vectors. The half-hourly table holds one row per
//! (day, slot) with the same-slot lag from the previous day.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{HalfHourlySeries, PreparedData, SLOTS_PER_DAY};

/// Fraction of the year elapsed at the start of `date`, in `[0, 1)`.
pub fn time_of_year(date: NaiveDate) -> f64 {
    let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
    (date.ordinal0() as f64) / days_in_year
}

/// Monday = 0 .. Sunday = 6.
pub fn day_of_week(date: NaiveDate) -> usize {
    date.weekday().num_days_from_monday() as usize
}

/// First-occurrence argmax and max of a slice.
pub fn peak_of(day: &[f64]) -> (f64, usize) {
    let mut best = (day[0], 0);
    for (t, &v) in day.iter().enumerate().skip(1) {
        if v > best.0 {
            best = (v, t);
        }
    }
    best
}

/// Per-day peak magnitude and first-occurrence peak slot.
pub fn daily_peaks(s: &HalfHourlySeries) -> Result<Vec<(f64, usize)>> {
    if s.slots_per_day != SLOTS_PER_DAY || s.values.len() % s.slots_per_day != 0 {
        return Err(Error::Integrity(format!(
            "daily peaks need whole {SLOTS_PER_DAY}-slot days; got {} values at {} slots/day",
            s.values.len(),
            s.slots_per_day
        )));
    }
    Ok((0..s.n_days()).map(|i| peak_of(s.day(i))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRow {
    pub date: NaiveDate,
    pub dp: f64,
    pub ip: usize,
    pub dow: usize,
    pub toy: f64,
    pub temp_max: f64,
    pub temp_min: f64,
    pub temp95_max: f64,
    pub temp95_min: f64,
    pub dp24: f64,
    pub ip24: usize,
    pub mat_tem: Vec<f64>,
    pub mat_tem95: Vec<f64>,
    pub mat_lag: Vec<f64>,
    /// The day's own demand profile. Never a model input; kept for the
    /// demand-at-predicted-instant metric.
    pub demand: Vec<f64>,
}

/// One row per retained day. `mat_int` (the slot grid) is shared by all rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyPeakTable {
    pub rows: Vec<DailyRow>,
    pub mat_int: Vec<f64>,
}

impl DailyPeakTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dp(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.dp).collect()
    }

    pub fn ip(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.ip).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.rows.iter().map(|r| r.date).collect()
    }

    pub fn filter(&self, keep: impl Fn(&DailyRow) -> bool) -> Self {
        Self {
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
            mat_int: self.mat_int.clone(),
        }
    }

    /// Rows with `from <= date < to`.
    pub fn between(&self, from: NaiveDate, to: NaiveDate) -> Self {
        self.filter(|r| r.date >= from && r.date < to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighResRow {
    pub date: NaiveDate,
    pub t: usize,
    pub load: f64,
    pub temp: f64,
    pub temp95: f64,
    pub dow: usize,
    pub toy: f64,
    pub load24: f64,
}

pub fn slot_grid() -> Vec<f64> {
    (0..SLOTS_PER_DAY).map(|t| t as f64).collect()
}

fn check_aligned(load: &HalfHourlySeries, temp: &HalfHourlySeries, temp95: &HalfHourlySeries) -> Result<()> {
    for (name, s) in [("temp", temp), ("temp95", temp95)] {
        if !load.same_grid(s) {
            return Err(Error::Alignment(format!(
                "{name} covers {} days from {} but load covers {} days from {}",
                s.n_days(),
                s.start_date,
                load.n_days(),
                load.start_date
            )));
        }
    }
    if load.slots_per_day != SLOTS_PER_DAY {
        return Err(Error::Integrity(format!(
            "expected {SLOTS_PER_DAY} slots per day, got {}",
            load.slots_per_day
        )));
    }
    if load.n_days() < 2 {
        return Err(Error::InsufficientData("feature tables need at least 2 days".into()));
    }
    Ok(())
}

/// Indices of days usable as rows: the day and the day before are both
/// complete, unflagged days.
fn usable_days(load: &HalfHourlySeries) -> Vec<usize> {
    let excluded: &BTreeSet<NaiveDate> = &load.flagged_days;
    (1..load.n_days())
        .filter(|&i| {
            let ok = !excluded.contains(&load.date(i)) && !excluded.contains(&load.date(i - 1));
            if !ok {
                log::debug!("skipping {} (clock-change day or lag undefined)", load.date(i));
            }
            ok
        })
        .collect()
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn build_daily_table(
    load: &HalfHourlySeries,
    temp: &HalfHourlySeries,
    temp95: &HalfHourlySeries,
) -> Result<DailyPeakTable> {
    check_aligned(load, temp, temp95)?;
    let peaks = daily_peaks(load)?;
    let rows = usable_days(load)
        .into_iter()
        .map(|i| {
            let date = load.date(i);
            let (temp_min, temp_max) = min_max(temp.day(i));
            let (temp95_min, temp95_max) = min_max(temp95.day(i));
            DailyRow {
                date,
                dp: peaks[i].0,
                ip: peaks[i].1,
                dow: day_of_week(date),
                toy: time_of_year(date),
                temp_max,
                temp_min,
                temp95_max,
                temp95_min,
                dp24: peaks[i - 1].0,
                ip24: peaks[i - 1].1,
                mat_tem: temp.day(i).to_vec(),
                mat_tem95: temp95.day(i).to_vec(),
                mat_lag: load.day(i - 1).to_vec(),
                demand: load.day(i).to_vec(),
            }
        })
        .collect();
    Ok(DailyPeakTable {
        rows,
        mat_int: slot_grid(),
    })
}

pub fn build_highres_rows(
    load: &HalfHourlySeries,
    temp: &HalfHourlySeries,
    temp95: &HalfHourlySeries,
) -> Result<Vec<HighResRow>> {
    check_aligned(load, temp, temp95)?;
    let days = usable_days(load);
    let mut rows = Vec::with_capacity(days.len() * SLOTS_PER_DAY);
    for i in days {
        let date = load.date(i);
        let (dow, toy) = (day_of_week(date), time_of_year(date));
        let (today, yesterday) = (load.day(i), load.day(i - 1));
        for t in 0..SLOTS_PER_DAY {
            rows.push(HighResRow {
                date,
                t,
                load: today[t],
                temp: temp.day(i)[t],
                temp95: temp95.day(i)[t],
                dow,
                toy,
                load24: yesterday[t],
            });
        }
    }
    Ok(rows)
}

impl PreparedData {
    pub fn daily_table(&self) -> Result<DailyPeakTable> {
        build_daily_table(&self.load, &self.temp, &self.temp95)
    }

    pub fn highres_rows(&self) -> Result<Vec<HighResRow>> {
        build_highres_rows(&self.load, &self.temp, &self.temp95)
    }
}

pub fn write_daily_csv(table: &DailyPeakTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let mut header = String::from(
        "date,DP,IP,dow,toy,tempMax,tempMin,temp95Max,temp95Min,DP24,IP24",
    );
    for name in ["matTem", "matTem95", "matLag", "matInt"] {
        for t in 0..SLOTS_PER_DAY {
            header.push_str(&format!(",{name}_{t:02}"));
        }
    }
    writeln!(w, "{header}").map_err(io)?;
    for r in &table.rows {
        let mut line = format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.date, r.dp, r.ip, r.dow, r.toy, r.temp_max, r.temp_min, r.temp95_max, r.temp95_min,
            r.dp24, r.ip24
        );
        for v in r.mat_tem.iter().chain(&r.mat_tem95).chain(&r.mat_lag).chain(&table.mat_int) {
            line.push(',');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_highres_csv(rows: &[HighResRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "date,t,load,temp,temp95,dow,toy,load24").map_err(io)?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.date, r.t, r.load, r.temp, r.temp95, r.dow, r.toy, r.load24
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
