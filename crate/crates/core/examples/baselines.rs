//! Naive and autoregressive baselines: persistence, an AR(p) model of the
//! daily peak with the order chosen by AIC, and one AR model per half-hour.
//!
//! ```text
//! cargo run --release --example baselines
//! ```

use chrono::NaiveDate;
use peakcast::baselines::{ar_forecast_highres, ar_forecast_lowres, fit_ar, persistence_forecast, DEFAULT_MAX_P};
use peakcast::evaluation::{mae, mape, r_accuracy};
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

fn main() -> peakcast::Result<()> {
    let data = SyntheticData::generate(&SyntheticConfig {
        days: 500,
        seed: 2,
        ..Default::default()
    })?;
    let table = data.prepared()?.daily_table()?;
    let split = NaiveDate::from_ymd_opt(2012, 7, 1).expect("valid date");
    let train = table.filter(|r| r.date < split);
    let test = table.filter(|r| r.date >= split);
    let (dp, ip) = (test.dp(), test.ip());

    let (p_dp, p_ip): (Vec<f64>, Vec<usize>) = persistence_forecast(&test).into_iter().unzip();
    println!(
        "persistence      DP MAPE {:.3}%  IP R-accuracy {:.1}%",
        mape(&p_dp, &dp)?,
        r_accuracy(&p_ip, &ip)?
    );

    let model = fit_ar(&train.dp(), DEFAULT_MAX_P)?;
    println!("AR order {} selected by AIC, coefficients {:.3?}", model.order, model.coefficients);
    let ar = ar_forecast_lowres(&train.dp(), &dp, DEFAULT_MAX_P)?;
    println!("daily-peak AR    DP MAPE {:.3}%", mape(&ar, &dp)?);

    let days = |t: &peakcast::features::DailyPeakTable| t.rows.iter().map(|r| r.demand.clone()).collect::<Vec<_>>();
    let hr = ar_forecast_highres(&days(&train), &days(&test), DEFAULT_MAX_P)?;
    let hr_dp: Vec<f64> = hr.iter().map(|(p, _, _)| *p).collect();
    let hr_ip: Vec<usize> = hr.iter().map(|(_, s, _)| *s).collect();
    println!(
        "half-hourly AR   DP MAPE {:.3}%  MAE {:.0} MW  IP R-accuracy {:.1}%",
        mape(&hr_dp, &dp)?,
        mae(&hr_dp, &dp)?,
        r_accuracy(&hr_ip, &ip)?
    );
    Ok(())
}
