//! Raw demand and weather ingestion.
//!
//! Demand arrives half-hourly, weather hourly per station. Both are parsed
//! onto a regular local-time grid, short gaps are filled linearly, station
//! temperatures are combined by population weight and interpolated to
//! half-hourly resolution with a natural cubic spline, and an exponentially
//! smoothed temperature is derived from the weighted series.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-hour slots in a regular (non-DST-transition) day.
pub const SLOTS_PER_DAY: usize = 48;

/// A whole-day, gap-free series on a half-hourly grid starting at midnight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HalfHourlySeries {
    pub start_date: NaiveDate,
    pub slots_per_day: usize,
    pub values: Vec<f64>,
    /// Days whose raw data did not contain exactly one value per slot
    /// (clock-change days). Their values are regularized onto the grid but
    /// downstream daily tables must skip them.
    #[serde(default)]
    pub flagged_days: BTreeSet<NaiveDate>,
}

impl HalfHourlySeries {
    pub fn new(start_date: NaiveDate, values: Vec<f64>) -> Result<Self> {
        Self::with_slots(start_date, SLOTS_PER_DAY, values)
    }

    pub fn with_slots(start_date: NaiveDate, slots_per_day: usize, values: Vec<f64>) -> Result<Self> {
        if slots_per_day == 0 || values.len() % slots_per_day != 0 {
            return Err(Error::Integrity(format!(
                "series length {} is not a multiple of {slots_per_day} slots per day",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Integrity(format!("non-finite value at slot {i}")));
        }
        Ok(Self {
            start_date,
            slots_per_day,
            values,
            flagged_days: BTreeSet::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn n_days(&self) -> usize {
        self.values.len() / self.slots_per_day
    }

    pub fn day(&self, i: usize) -> &[f64] {
        &self.values[i * self.slots_per_day..(i + 1) * self.slots_per_day]
    }

    pub fn date(&self, i: usize) -> NaiveDate {
        self.start_date + Duration::days(i as i64)
    }

    pub fn end_date(&self) -> NaiveDate {
        self.date(self.n_days())
    }

    pub fn timestamp(&self, slot: usize) -> NaiveDateTime {
        let step = 24 * 60 / self.slots_per_day as i64;
        self.start_date.and_time(NaiveTime::MIN) + Duration::minutes(step * slot as i64)
    }

    /// Restrict to whole days in `[from, to)`.
    pub fn slice_days(&self, from: NaiveDate, to: NaiveDate) -> Result<Self> {
        if from < self.start_date || to > self.end_date() || from > to {
            return Err(Error::Alignment(format!(
                "cannot slice [{from}, {to}) from series covering [{}, {})",
                self.start_date,
                self.end_date()
            )));
        }
        let a = (from - self.start_date).num_days() as usize * self.slots_per_day;
        let b = (to - self.start_date).num_days() as usize * self.slots_per_day;
        Ok(Self {
            start_date: from,
            slots_per_day: self.slots_per_day,
            values: self.values[a..b].to_vec(),
            flagged_days: self.flagged_days.range(from..to).copied().collect(),
        })
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.start_date == other.start_date
            && self.slots_per_day == other.slots_per_day
            && self.values.len() == other.values.len()
    }
}

/// Hourly temperature record of one weather station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSeries {
    pub station_id: String,
    pub population_weight: f64,
    pub start: NaiveDateTime,
    pub values: Vec<f64>,
}

impl StationSeries {
    pub fn new(
        station_id: impl Into<String>,
        population_weight: f64,
        start: NaiveDateTime,
        values: Vec<f64>,
    ) -> Result<Self> {
        let station_id = station_id.into();
        if !(population_weight > 0.0 && population_weight.is_finite()) {
            return Err(Error::Parameter(format!(
                "station {station_id}: population weight must be positive, got {population_weight}"
            )));
        }
        Ok(Self {
            station_id,
            population_weight,
            start,
            values,
        })
    }

    pub fn end(&self) -> NaiveDateTime {
        self.start + Duration::hours(self.values.len() as i64)
    }

    pub fn timestamp(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::hours(i as i64)
    }
}

/// Column mapping for a two-column time series CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub timestamp: String,
    pub value: String,
}

impl CsvSchema {
    pub fn demand() -> Self {
        Self {
            timestamp: "timestamp".into(),
            value: "load_mw".into(),
        }
    }

    pub fn weather() -> Self {
        Self {
            timestamp: "timestamp".into(),
            value: "temp_c".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GapFill {
    Linear,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub schema: CsvSchema,
    pub gap_fill: GapFill,
    /// Longest run of consecutive missing slots that may be filled.
    pub max_gap: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            schema: CsvSchema::demand(),
            gap_fill: GapFill::Linear,
            max_gap: 2,
        }
    }
}

struct RawPoint {
    local: NaiveDateTime,
    offset: Option<i32>,
    value: f64,
    row: usize,
}

/// Parse an ISO-8601 timestamp. Offsets, when present, are kept so that
/// repeated wall-clock times on clock-change days can be told apart from
/// genuine duplicates.
pub fn parse_timestamp(s: &str) -> Option<(NaiveDateTime, Option<i32>)> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some((dt.naive_local(), Some(dt.offset().local_minus_utc())));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%:z", "%Y-%m-%d %H:%M:%S%:z", "%Y-%m-%d %H:%M%:z"] {
        if let Ok(dt) = DateTime::parse_from_str(s, fmt) {
            return Some((dt.naive_local(), Some(dt.offset().local_minus_utc())));
        }
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
        "%Y-%m-%dT%H:%M:%S%.f",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some((dt, None));
        }
    }
    None
}

fn read_points(path: &Path, schema: &CsvSchema) -> Result<Vec<RawPoint>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        },
        _ => Error::Csv(e),
    })?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| {
            Error::Config(format!("{}: missing column `{name}`", path.display()))
        })
    };
    let ts_col = col(&schema.timestamp)?;
    let val_col = col(&schema.value)?;

    let mut points = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // header is line 1
        let row = i + 2;
        let ts = rec.get(ts_col).unwrap_or("");
        let (local, offset) = parse_timestamp(ts).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row,
            what: "timestamp",
            value: ts.to_string(),
        })?;
        let raw = rec.get(val_col).unwrap_or("").trim();
        let value: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
            Error::Parse {
                path: path.to_path_buf(),
                row,
                what: "value",
                value: raw.to_string(),
            }
        })?;
        points.push(RawPoint {
            local,
            offset,
            value,
            row,
        });
    }
    Ok(points)
}

/// Regularize raw points onto a fixed-step grid. Returns the grid start,
/// the values, and the dates touched by a clock change.
fn regularize(
    path: &Path,
    mut points: Vec<RawPoint>,
    step_minutes: i64,
    opts: &LoadOptions,
) -> Result<(NaiveDateTime, Vec<f64>, BTreeSet<NaiveDate>)> {
    if points.is_empty() {
        return Err(Error::InsufficientData(format!("{}: no rows", path.display())));
    }
    let utc_key = |p: &RawPoint| p.local - Duration::seconds(p.offset.unwrap_or(0) as i64);
    points.sort_by(|a, b| a.local.cmp(&b.local).then(utc_key(a).cmp(&utc_key(b))));

    let step = Duration::minutes(step_minutes);
    let mut flagged = BTreeSet::new();
    let mut values: Vec<f64> = Vec::with_capacity(points.len());
    let start = points[0].local;
    if (start.and_utc().timestamp() / 60) % step_minutes != 0 {
        return Err(Error::Integrity(format!(
            "{}: row {}: timestamp {start} is not on the {step_minutes}-minute grid",
            path.display(),
            points[0].row
        )));
    }
    values.push(points[0].value);
    let mut prev = &points[0];
    for p in &points[1..] {
        let delta = p.local - prev.local;
        if delta.is_zero() {
            match (prev.offset, p.offset) {
                (Some(a), Some(b)) if a != b => {
                    // autumn clock change: repeated wall-clock hour, keep the first
                    flagged.insert(p.local.date());
                    prev = p;
                    continue;
                }
                _ => {
                    return Err(Error::Integrity(format!(
                        "{}: row {}: duplicate timestamp {}",
                        path.display(),
                        p.row,
                        p.local
                    )))
                }
            }
        }
        let minutes = delta.num_minutes();
        if minutes % step_minutes != 0 || delta.num_seconds() % 60 != 0 {
            return Err(Error::Integrity(format!(
                "{}: row {}: timestamp {} is off the {step_minutes}-minute grid",
                path.display(),
                p.row,
                p.local
            )));
        }
        let missing = (minutes / step_minutes - 1) as usize;
        if missing > 0 {
            let clock_change = matches!((prev.offset, p.offset), (Some(a), Some(b)) if a != b);
            if clock_change {
                flagged.insert(p.local.date());
            } else if opts.gap_fill == GapFill::Reject || missing > opts.max_gap {
                return Err(Error::Integrity(format!(
                    "{}: row {}: gap of {missing} missing slots before {} exceeds limit {}",
                    path.display(),
                    p.row,
                    p.local,
                    if opts.gap_fill == GapFill::Reject { 0 } else { opts.max_gap }
                )));
            }
            let a = prev.value;
            for j in 1..=missing {
                let w = j as f64 / (missing + 1) as f64;
                values.push(a + w * (p.value - a));
            }
        }
        values.push(p.value);
        prev = p;
    }
    debug_assert_eq!(
        start + step * (values.len() as i32 - 1),
        points.last().map(|p| p.local).unwrap()
    );
    Ok((start, values, flagged))
}

/// Drop leading and trailing partial days so the grid starts at midnight.
fn trim_to_whole_days(start: NaiveDateTime, values: Vec<f64>, per_day: usize) -> Option<(NaiveDate, Vec<f64>)> {
    let step = 24 * 60 / per_day as i64;
    let minute_of_day = start.time().signed_duration_since(NaiveTime::MIN).num_minutes();
    let (skip, first_date) = if minute_of_day == 0 {
        (0, start.date())
    } else {
        (((24 * 60 - minute_of_day) / step) as usize, start.date().succ_opt()?)
    };
    if skip >= values.len() {
        return None;
    }
    let rest = values.len() - skip;
    let whole = rest / per_day * per_day;
    if whole == 0 {
        return None;
    }
    if skip > 0 || whole < rest {
        log::info!(
            "trimmed {skip} leading and {} trailing slots to whole days",
            rest - whole
        );
    }
    Some((first_date, values[skip..skip + whole].to_vec()))
}

/// Load half-hourly demand from CSV onto a contiguous whole-day grid.
pub fn load_demand_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<HalfHourlySeries> {
    let path = path.as_ref();
    let points = read_points(path, &opts.schema)?;
    let (start, values, flagged) = regularize(path, points, 30, opts)?;
    let (date, values) = trim_to_whole_days(start, values, SLOTS_PER_DAY).ok_or_else(|| {
        Error::InsufficientData(format!("{}: no complete day of data", path.display()))
    })?;
    let mut series = HalfHourlySeries::new(date, values)?;
    let end = series.end_date();
    series.flagged_days = flagged.into_iter().filter(|d| *d >= date && *d < end).collect();
    for d in &series.flagged_days {
        log::warn!("{}: {d} is a clock-change day; excluded from daily tables", path.display());
    }
    Ok(series)
}

/// Load one station's hourly temperature record.
pub fn load_station_csv(
    path: impl AsRef<Path>,
    station_id: &str,
    population_weight: f64,
    opts: &LoadOptions,
) -> Result<StationSeries> {
    let path = path.as_ref();
    let points = read_points(path, &opts.schema).map_err(|e| match e {
        Error::Io { source, .. } => Error::Config(format!(
            "station `{station_id}`: cannot read weather file {}: {source}",
            path.display()
        )),
        other => other,
    })?;
    let (start, values, _) = regularize(path, points, 60, opts)?;
    StationSeries::new(station_id, population_weight, start, values)
}

/// Natural cubic spline through `(x_i, y_i)` with strictly increasing knots.
#[derive(Debug, Clone)]
pub struct NaturalCubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// second derivatives at the knots; zero at both ends
    m: Vec<f64>,
}

impl NaturalCubicSpline {
    pub fn fit(x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if n != y.len() {
            return Err(Error::Alignment(format!("{n} knots but {} values", y.len())));
        }
        if n < 3 {
            return Err(Error::InsufficientData(format!("spline needs >= 3 knots, got {n}")));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parameter("spline knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        // tridiagonal system for interior second derivatives m_1..m_{n-2}
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut upper = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for i in 0..k {
            diag[i] = 2.0 * (h[i] + h[i + 1]);
            upper[i] = h[i + 1];
            rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
        }
        // Thomas algorithm; sub-diagonal entry of row i is h[i]
        for i in 1..k {
            let w = h[i] / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut interior = vec![0.0; k];
        for i in (0..k).rev() {
            let next = if i + 1 < k { upper[i] * interior[i + 1] } else { 0.0 };
            interior[i] = (rhs[i] - next) / diag[i];
        }
        let mut m = vec![0.0; n];
        m[1..n - 1].copy_from_slice(&interior);
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            m,
        })
    }

    pub fn second_derivatives(&self) -> &[f64] {
        &self.m
    }

    /// Evaluate the spline. Outside the knot range the natural spline is
    /// continued linearly (zero curvature at the boundary).
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            let slope = self.slope_at(0);
            return self.y[0] + slope * (t - self.x[0]);
        }
        if t >= self.x[n - 1] {
            let slope = self.slope_at(n - 1);
            return self.y[n - 1] + slope * (t - self.x[n - 1]);
        }
        let i = match self.x.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn slope_at(&self, knot: usize) -> f64 {
        let n = self.x.len();
        if knot == 0 {
            let h = self.x[1] - self.x[0];
            (self.y[1] - self.y[0]) / h - h * (2.0 * self.m[0] + self.m[1]) / 6.0
        } else {
            debug_assert_eq!(knot, n - 1);
            let h = self.x[n - 1] - self.x[n - 2];
            (self.y[n - 1] - self.y[n - 2]) / h + h * (self.m[n - 2] + 2.0 * self.m[n - 1]) / 6.0
        }
    }
}

/// Interpolate an hourly record to half-hourly resolution.
///
/// The station must start at midnight and cover whole days. Output slot `2j`
/// is the hourly knot `j`; odd slots are spline midpoints, and the final
/// half hour of the last day lies past the last knot and uses the linear
/// continuation of the natural spline.
pub fn interpolate_hourly_to_halfhourly(s: &StationSeries) -> Result<HalfHourlySeries> {
    let n = s.values.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "station {}: interpolation needs >= 4 hourly points, got {n}",
            s.station_id
        )));
    }
    if s.start.time() != NaiveTime::MIN || n % 24 != 0 {
        return Err(Error::Alignment(format!(
            "station {}: hourly record must start at midnight and cover whole days",
            s.station_id
        )));
    }
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let spline = NaturalCubicSpline::fit(&x, &s.values)?;
    let out: Vec<f64> = (0..2 * n)
        .map(|j| if j % 2 == 0 { s.values[j / 2] } else { spline.eval(j as f64 / 2.0) })
        .collect();
    HalfHourlySeries::new(s.start.date(), out)
}

/// Population-weighted mean of station temperatures at every hour.
pub fn weighted_hourly(stations: &[StationSeries]) -> Result<StationSeries> {
    let first = stations
        .first()
        .ok_or_else(|| Error::InsufficientData("no weather stations".into()))?;
    for s in &stations[1..] {
        if s.start != first.start || s.values.len() != first.values.len() {
            return Err(Error::Alignment(format!(
                "station {} covers [{}, {}) but {} covers [{}, {})",
                s.station_id,
                s.start,
                s.end(),
                first.station_id,
                first.start,
                first.end()
            )));
        }
    }
    let total: f64 = stations.iter().map(|s| s.population_weight).sum();
    let values = (0..first.values.len())
        .map(|t| {
            stations
                .iter()
                .map(|s| s.population_weight * s.values[t])
                .sum::<f64>()
                / total
        })
        .collect();
    StationSeries::new("weighted", total, first.start, values)
}

/// Population-weighted temperature on the half-hourly grid.
///
/// Weighting and spline interpolation are both linear in the data, so
/// weighting hourly records first and interpolating once gives the same
/// series as interpolating each station and weighting afterwards.
pub fn population_weighted_temperature(stations: &[StationSeries]) -> Result<HalfHourlySeries> {
    interpolate_hourly_to_halfhourly(&weighted_hourly(stations)?)
}

/// Clip stations to their common time intersection, further restricted to
/// whole days starting at midnight.
pub fn clip_to_common_span(stations: &[StationSeries]) -> Result<Vec<StationSeries>> {
    let start = stations
        .iter()
        .map(|s| s.start)
        .max()
        .ok_or_else(|| Error::InsufficientData("no weather stations".into()))?;
    let end = stations.iter().map(|s| s.end()).min().unwrap();
    let day_start = if start.time() == NaiveTime::MIN {
        start
    } else {
        (start.date() + Duration::days(1)).and_time(NaiveTime::MIN)
    };
    let day_end = end.date().and_time(NaiveTime::MIN);
    if day_end <= day_start {
        return Err(Error::Alignment(
            "weather stations share no complete day".into(),
        ));
    }
    stations
        .iter()
        .map(|s| {
            let a = (day_start - s.start).num_hours() as usize;
            let b = (day_end - s.start).num_hours() as usize;
            StationSeries::new(
                s.station_id.clone(),
                s.population_weight,
                day_start,
                s.values[a..b].to_vec(),
            )
        })
        .collect()
}

/// Exponential smoothing: `out[0] = in[0]`,
/// `out[t] = alpha * out[t-1] + (1 - alpha) * in[t]`.
pub fn exponential_smooth(s: &HalfHourlySeries, alpha: f64) -> Result<HalfHourlySeries> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::Parameter(format!("smoothing alpha must lie in [0, 1), got {alpha}")));
    }
    if s.values.is_empty() {
        return Err(Error::InsufficientData("cannot smooth an empty series".into()));
    }
    let mut out = Vec::with_capacity(s.values.len());
    let mut acc = s.values[0];
    out.push(acc);
    for &v in &s.values[1..] {
        acc = alpha * acc + (1.0 - alpha) * v;
        out.push(acc);
    }
    Ok(HalfHourlySeries {
        values: out,
        ..s.clone()
    })
}

/// Aligned load and temperature signals ready for feature construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub load: HalfHourlySeries,
    pub temp: HalfHourlySeries,
    pub temp95: HalfHourlySeries,
}

pub const TEMP_SMOOTHING: f64 = 0.95;

impl PreparedData {
    /// Align demand with station records: stations are clipped to their
    /// common span, weighted, interpolated and smoothed, and the result is
    /// intersected with the demand span.
    pub fn from_sources(load: HalfHourlySeries, stations: &[StationSeries], alpha: f64) -> Result<Self> {
        let stations = clip_to_common_span(stations)?;
        let temp = population_weighted_temperature(&stations)?;
        let temp95 = exponential_smooth(&temp, alpha)?;
        let from = load.start_date.max(temp.start_date);
        let to = load.end_date().min(temp.end_date());
        if to <= from {
            return Err(Error::Alignment("demand and weather spans do not overlap".into()));
        }
        let mut temp = temp.slice_days(from, to)?;
        let mut temp95 = temp95.slice_days(from, to)?;
        let load = load.slice_days(from, to)?;
        temp.flagged_days = load.flagged_days.clone();
        temp95.flagged_days = load.flagged_days.clone();
        Ok(Self { load, temp, temp95 })
    }

    pub fn n_days(&self) -> usize {
        self.load.n_days()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "timestamp,load,temp,temp95,flagged").map_err(io)?;
        for i in 0..self.load.len() {
            let day = self.load.date(i / self.load.slots_per_day);
            writeln!(
                w,
                "{},{},{},{},{}",
                self.load.timestamp(i).format("%Y-%m-%dT%H:%M:%S"),
                self.load.values[i],
                self.temp.values[i],
                self.temp95.values[i],
                u8::from(self.load.flagged_days.contains(&day))
            )
            .map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Integrity(format!("{}: {other:?}", path.display())),
        })?;
        let mut start = None;
        let (mut load, mut temp, mut temp95) = (Vec::new(), Vec::new(), Vec::new());
        let mut flagged = BTreeSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 2;
            let field = |j: usize, what: &'static str| -> Result<f64> {
                let raw = rec.get(j).unwrap_or("");
                raw.trim().parse().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    row,
                    what,
                    value: raw.to_string(),
                })
            };
            let ts = rec.get(0).unwrap_or("");
            let (local, _) = parse_timestamp(ts).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row,
                what: "timestamp",
                value: ts.to_string(),
            })?;
            if start.is_none() {
                start = Some(local.date());
            }
            load.push(field(1, "load")?);
            temp.push(field(2, "temp")?);
            temp95.push(field(3, "temp95")?);
            if rec.get(4).map(str::trim) == Some("1") {
                flagged.insert(local.date());
            }
        }
        let start =
            start.ok_or_else(|| Error::InsufficientData(format!("{}: empty", path.display())))?;
        let mut load = HalfHourlySeries::new(start, load)?;
        let mut temp = HalfHourlySeries::new(start, temp)?;
        let mut temp95 = HalfHourlySeries::new(start, temp95)?;
        load.flagged_days = flagged.clone();
        temp.flagged_days = flagged.clone();
        temp95.flagged_days = flagged;
        Ok(Self { load, temp, temp95 })
    }
}
