//! Natural cubic spline interpolation of an hourly temperature record to
//! half-hourly resolution, and the exponential smoothing applied afterwards.
//!
//! ```text
//! cargo run --release --example spline_interpolation
//! ```

use chrono::NaiveDate;
use peakcast::ingest::{exponential_smooth, interpolate_hourly_to_halfhourly, NaturalCubicSpline, StationSeries};

fn main() -> peakcast::Result<()> {
    // a day of hourly readings following a smooth diurnal cycle
    let hourly: Vec<f64> = (0..48)
        .map(|h| 8.0 + 5.0 * (2.0 * std::f64::consts::PI * (h as f64 - 9.0) / 24.0).sin())
        .collect();
    let start = NaiveDate::from_ymd_opt(2014, 3, 1).expect("valid date").and_hms_opt(0, 0, 0).expect("midnight");
    let station = StationSeries::new("demo", 1.0, start, hourly.clone())?;
    let halfhourly = interpolate_hourly_to_halfhourly(&station)?;
    println!("{} hourly readings -> {} half-hourly values", hourly.len(), halfhourly.len());

    println!("{:>6} {:>9} {:>9}", "time", "spline", "truth");
    for slot in (0..12).map(|i| 2 * i + 1) {
        let t = slot as f64 / 2.0;
        let truth = 8.0 + 5.0 * (2.0 * std::f64::consts::PI * (t - 9.0) / 24.0).sin();
        println!("{:>6.1} {:>9.4} {:>9.4}", t, halfhourly.values[slot], truth);
    }

    // the spline itself: exact at the knots, zero curvature at both ends
    let x: Vec<f64> = (0..hourly.len()).map(|h| h as f64).collect();
    let spline = NaturalCubicSpline::fit(&x, &hourly)?;
    let m = spline.second_derivatives();
    println!("end curvatures {:.1} and {:.1}; value at 10.25 h = {:.4}", m[0], m[m.len() - 1], spline.eval(10.25));

    let smoothed = exponential_smooth(&halfhourly, 0.95)?;
    println!(
        "smoothed temperature lags the raw series: raw max {:.2}, smoothed max {:.2}",
        halfhourly.values.iter().cloned().fold(f64::MIN, f64::max),
        smoothed.values.iter().cloned().fold(f64::MIN, f64::max)
    );
    Ok(())
}
