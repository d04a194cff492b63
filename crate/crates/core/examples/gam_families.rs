//! Daily-peak GAMs with the four response families: Gaussian, scaled-t and
//! GEV for the peak magnitude, ordered-categorical for the peak instant.
//!
//! ```text
//! cargo run --release --example gam_families
//! ```

use std::time::Instant;

use chrono::NaiveDate;
use peakcast::evaluation::{mape, r_accuracy};
use peakcast::gam_engine::{fit, Family, FitOptions, Frame, ModelSpec, Response};
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

fn main() -> peakcast::Result<()> {
    let data = SyntheticData::generate(&SyntheticConfig {
        days: 2 * 365,
        seed: 4,
        ..Default::default()
    })?;
    let table = data.prepared()?.daily_table()?;
    let split = NaiveDate::from_ymd_opt(2013, 5, 1).expect("valid date");
    let train = table.filter(|r| r.date < split);
    let test = table.filter(|r| r.date >= split);
    let (train_frame, test_frame) = (Frame::from_daily(&train), Frame::from_daily(&test));

    for family in [Family::Gaussian, Family::ScaledT, Family::Gev] {
        let t0 = Instant::now();
        let model = fit(&ModelSpec::lowres(family, Response::Dp), &train_frame, &FitOptions::default())?;
        let forecast = model.predict(&test_frame)?.location;
        println!(
            "{:<9} AIC {:>9.1}  edf {:>5.1}  test MAPE {:.3}%  ({:.1?})  {:?}",
            format!("{family:?}"),
            model.aic,
            model.edf,
            mape(&forecast, &test.dp())?,
            t0.elapsed(),
            model.family_params
        );
    }

    let t0 = Instant::now();
    let ocat = fit(&ModelSpec::lowres(Family::Ocat, Response::Ip), &train_frame, &FitOptions::default())?;
    let pred = ocat.predict(&test_frame)?;
    let slots = pred.category.expect("ocat predicts categories");
    println!(
        "Ocat      AIC {:>9.1}  edf {:>5.1}  R-accuracy {:.1}% on {} test days  ({:.1?})",
        ocat.aic,
        ocat.edf,
        r_accuracy(&slots, &test.ip())?,
        test.len(),
        t0.elapsed()
    );
    Ok(())
}
