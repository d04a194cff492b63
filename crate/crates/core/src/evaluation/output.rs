//! Backtest artifacts: forecasts CSV, report JSON, figure data and SVGs,
//! and a markdown summary. Everything here is a pure function of its
//! inputs, so regenerating from the same report gives identical files.

use std::fmt::Write as _;
use std::path::Path;

use super::backtest::{BacktestReport, ForecastRecord, REPORT_SCHEMA_VERSION};
use super::Metric;
use crate::error::{Error, Result};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `date,model_id,dp_forecast,dp_actual,ip_forecast,ip_actual`, sorted by
/// model then date.
pub fn write_forecasts_csv(records: &[ForecastRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut sorted: Vec<&ForecastRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.model_id, a.date).cmp(&(&b.model_id, b.date)));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["date", "model_id", "dp_forecast", "dp_actual", "ip_forecast", "ip_actual"])?;
    for r in sorted {
        w.write_record([
            r.date.to_string(),
            r.model_id.clone(),
            opt(r.dp_forecast),
            r.dp_actual.to_string(),
            opt(r.ip_forecast),
            r.ip_actual.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Integrity(e.to_string()))?;
    write_file(path.as_ref(), &String::from_utf8_lossy(&bytes))
}

pub fn report_to_json(report: &BacktestReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

pub fn write_report_json(report: &BacktestReport, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &report_to_json(report)?)
}

/// Parse a report, rejecting other schema versions.
pub fn read_report_json(path: impl AsRef<Path>) -> Result<BacktestReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(REPORT_SCHEMA_VERSION)) {
        return Err(Error::Config(format!(
            "{}: report schema version {version:?} is not {REPORT_SCHEMA_VERSION}",
            path.display()
        )));
    }
    Ok(serde_json::from_value(value)?)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

fn svg_header(out: &mut String, w: f64, h: f64, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{title}</text>"#, w / 2.0);
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad, hi + pad)
}

/// Line chart of cumulative metric traces, one polyline per model.
pub fn render_svg_traces(report: &BacktestReport, metric: Metric) -> String {
    let series: Vec<(&String, &Vec<super::TracePoint>)> = report
        .models
        .iter()
        .filter_map(|(id, m)| m.cumulative.get(metric.key()).map(|t| (id, t)))
        .collect();
    let (w, h, left, right, top, bottom) = (720.0, 420.0, 60.0, 150.0, 30.0, 40.0);
    let mut out = String::new();
    svg_header(&mut out, w, h, &format!("Cumulative {}", metric.label()));
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(0);
    let (lo, hi) = bounds(series.iter().flat_map(|s| s.1.iter().map(|p| p.value)));
    let x = |i: usize| left + (w - left - right) * if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
    let y = |v: f64| top + (h - top - bottom) * (1.0 - (v - lo) / (hi - lo));
    let _ = writeln!(
        out,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    let _ = writeln!(out, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, h - bottom);
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 4.0, y(v) + 4.0);
    }
    if let Some((_, first)) = series.iter().max_by_key(|s| s.1.len()) {
        for (i, p) in first.iter().enumerate().step_by((n / 8).max(1)) {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x(i), h - bottom + 16.0, p.month);
        }
    }
    for (k, (id, trace)) in series.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = trace
            .iter()
            .enumerate()
            .map(|(i, p)| format!("{:.1},{:.1}", x(i + n - trace.len()), y(p.value)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = top + 14.0 * k as f64 + 10.0;
        let _ = writeln!(out, r#"<rect x="{}" y="{}" width="10" height="3" fill="{colour}"/>"#, w - right + 10.0, ly - 4.0);
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{id}</text>"#, w - right + 25.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Boxplots of bootstrap quantiles (whiskers at 2.5% and 97.5%).
pub fn render_svg_boxplot(report: &BacktestReport, metric: Metric) -> String {
    let boxes: Vec<(&String, &super::Quantiles)> = report
        .models
        .iter()
        .filter_map(|(id, m)| m.bootstrap.get(metric.key()).map(|q| (id, q)))
        .collect();
    let (w, h, left, top, bottom) = (720.0, 420.0, 60.0, 30.0, 80.0);
    let mut out = String::new();
    svg_header(&mut out, w, h, &format!("Bootstrap {} (final year)", metric.label()));
    let (lo, hi) = bounds(boxes.iter().flat_map(|(_, q)| [q.q025, q.q975]));
    let y = |v: f64| top + (h - top - bottom) * (1.0 - (v - lo) / (hi - lo));
    let slot = (w - left - 20.0) / boxes.len().max(1) as f64;
    for v in [lo, (lo + hi) / 2.0, hi] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#, left - 4.0, y(v) + 4.0);
    }
    for (k, (id, q)) in boxes.iter().enumerate() {
        let cx = left + slot * (k as f64 + 0.5);
        let half = slot * 0.3;
        let _ = writeln!(
            out,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(q.q975),
            y(q.q025)
        );
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{}" stroke="black"/>"#,
            cx - half,
            y(q.q75),
            2.0 * half,
            (y(q.q25) - y(q.q75)).max(0.5),
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(q.q50),
            cx + half,
            y(q.q50)
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.1}" y="{}" text-anchor="end" transform="rotate(-45 {cx:.1} {})">{id}</text>"#,
            h - bottom + 14.0,
            h - bottom + 14.0
        );
    }
    out.push_str("</svg>\n");
    out
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Write `figures/cumulative_<metric>.{csv,svg}`, `bootstrap_<metric>.{csv,svg}`
/// and `dm_<variant>.csv` under `dir`.
pub fn write_figures(report: &BacktestReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let metrics = Metric::DP.iter().chain(Metric::IP.iter());
    for &metric in metrics {
        let key = metric.key();
        let mut csv = String::from("model_id,month,value\n");
        let mut any = false;
        for (id, m) in &report.models {
            for p in m.cumulative.get(key).into_iter().flatten() {
                let _ = writeln!(csv, "{id},{},{}", p.month, p.value);
                any = true;
            }
        }
        if any {
            write_file(&dir.join(format!("cumulative_{key}.csv")), &csv)?;
            write_file(&dir.join(format!("cumulative_{key}.svg")), &render_svg_traces(report, metric))?;
        }
        let mut csv = String::from("model_id,q025,q25,q50,q75,q975,mean\n");
        let mut any = false;
        for (id, m) in &report.models {
            if let Some(q) = m.bootstrap.get(key) {
                let _ = writeln!(csv, "{id},{},{},{},{},{},{}", q.q025, q.q25, q.q50, q.q75, q.q975, q.mean);
                any = true;
            }
        }
        if any {
            write_file(&dir.join(format!("bootstrap_{key}.csv")), &csv)?;
            write_file(&dir.join(format!("bootstrap_{key}.svg")), &render_svg_boxplot(report, metric))?;
        }
    }
    for (variant, dm) in &report.dm {
        let mut csv = format!("model,{}\n", dm.models.join(","));
        for (i, id) in dm.models.iter().enumerate() {
            let cells: Vec<String> = dm.p_value[i].iter().map(|v| fmt_opt(*v)).collect();
            let _ = writeln!(csv, "{id},{}", cells.join(","));
        }
        write_file(&dir.join(format!("dm_{variant}.csv")), &csv)?;
    }
    Ok(())
}

/// Markdown tables of final-year metrics with the best model in bold, and
/// DM p-value matrices with non-rejections (p ≥ 0.05) marked `*`.
pub fn render_summary(report: &BacktestReport) -> String {
    let mut out = String::from("# Backtest summary\n\n");
    let _ = writeln!(
        out,
        "Final-year window: {} to {} (exclusive); {} folds audited for leakage.\n",
        report.last_year.0, report.last_year.1, report.folds_audited
    );
    for (title, metrics) in [("Daily peak magnitude", Metric::DP), ("Instant of peak", Metric::IP)] {
        let rows: Vec<(&String, Vec<Option<f64>>)> = report
            .models
            .iter()
            .map(|(id, m)| {
                let vals = metrics
                    .iter()
                    .map(|k| m.metrics.get("last_year").and_then(|w| w.get(k.key())).copied())
                    .collect();
                (id, vals)
            })
            .filter(|(_, v): &(_, Vec<Option<f64>>)| v.iter().any(Option::is_some))
            .collect();
        if rows.is_empty() {
            continue;
        }
        let _ = writeln!(out, "## {title}\n");
        let header: Vec<&str> = metrics.iter().map(Metric::label).collect();
        let _ = writeln!(out, "| Model | {} |", header.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(metrics.len()));
        let best: Vec<Option<f64>> = (0..metrics.len())
            .map(|j| {
                let vals = rows.iter().filter_map(|r| r.1[j]);
                if metrics[j].higher_is_better() {
                    vals.fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.max(v))))
                } else {
                    vals.fold(None, |b: Option<f64>, v| Some(b.map_or(v, |b| b.min(v))))
                }
            })
            .collect();
        for (id, vals) in &rows {
            let cells: Vec<String> = vals
                .iter()
                .zip(&best)
                .map(|(v, b)| match v {
                    Some(x) if Some(*x) == *b => format!("**{x:.3}**"),
                    Some(x) => format!("{x:.3}"),
                    None => "–".into(),
                })
                .collect();
            let _ = writeln!(out, "| {id} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    for (variant, dm) in &report.dm {
        if dm.models.is_empty() {
            continue;
        }
        let _ = writeln!(
            out,
            "## Diebold–Mariano p-values ({variant} loss, {} days)\n\nRow model vs column model; `*` marks p ≥ 0.05 (equal accuracy not rejected).\n",
            dm.days
        );
        let _ = writeln!(out, "| | {} |", dm.models.join(" | "));
        let _ = writeln!(out, "|---|{}", "---:|".repeat(dm.models.len()));
        for (i, id) in dm.models.iter().enumerate() {
            let cells: Vec<String> = dm.p_value[i]
                .iter()
                .map(|p| match p {
                    Some(p) if *p >= 0.05 => format!("{p:.3}*"),
                    Some(p) => format!("{p:.3}"),
                    None => "–".into(),
                })
                .collect();
            let _ = writeln!(out, "| {id} | {} |", cells.join(" | "));
        }
        out.push('\n');
    }
    if !report.failures.is_empty() {
        let _ = writeln!(out, "## Aborted models\n");
        for (id, e) in &report.failures {
            let _ = writeln!(out, "- {id}: {e}");
        }
    }
    out
}
