//! Low- versus multi-resolution daily-peak GAMs on synthetic data whose
//! peak depends on the intraday temperature path.
//!
//! Fits both Gaussian models on two years, compares AIC, and scores
//! one-month-ahead forecasts on the following months.
//!
//! ```text
//! cargo run --release --example gam_low_vs_multi -- [seed]
//! ```

use std::time::Instant;

use chrono::NaiveDate;
use peakcast::evaluation::{mae, mape, rmse};
use peakcast::gam_engine::{fit, Family, FitOptions, Frame, ModelSpec, Response};
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

fn main() -> peakcast::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let data = SyntheticData::generate(&SyntheticConfig {
        days: 2 * 365 + 120,
        seed,
        ..Default::default()
    })?;
    let table = data.prepared()?.daily_table()?;
    let split = NaiveDate::from_ymd_opt(2013, 7, 1).expect("valid date");
    let train = table.filter(|r| r.date < split);
    let test = table.filter(|r| r.date >= split);
    println!("{} training days, {} test days", train.len(), test.len());

    let (train_frame, test_frame) = (Frame::from_daily(&train), Frame::from_daily(&test));
    let actual = test.dp();
    for (name, spec) in [
        ("low-resolution", ModelSpec::lowres(Family::Gaussian, Response::Dp)),
        ("multi-resolution", ModelSpec::multires(Family::Gaussian, Response::Dp)),
    ] {
        let t0 = Instant::now();
        let model = fit(&spec, &train_frame, &FitOptions::default())?;
        let forecast = model.predict(&test_frame)?.location;
        println!(
            "{name:>16}: AIC {:>10.1}  edf {:>6.1}  MAPE {:.3}%  MAE {:>7.1} MW  RMSE {:>7.1} MW  ({:.1?})",
            model.aic,
            model.edf,
            mape(&forecast, &actual)?,
            mae(&forecast, &actual)?,
            rmse(&forecast, &actual)?,
            t0.elapsed()
        );
    }
    Ok(())
}
