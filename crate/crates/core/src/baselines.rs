//! Reference forecasters: persistence and autoregressive models chosen by
//! AIC, at daily and half-hourly resolution.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{peak_of, DailyPeakTable};

/// Yesterday's peak magnitude and instant, per table row.
pub fn persistence_forecast(table: &DailyPeakTable) -> Vec<(f64, usize)> {
    table.rows.iter().map(|r| (r.dp24, r.ip24)).collect()
}

pub const DEFAULT_MAX_P: usize = 7;

/// `y_t = c + sum_j phi_j y_{t-j} + e_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub noise_variance: f64,
}

impl ArModel {
    /// One-step forecast from the values preceding the target, oldest first.
    pub fn forecast_next(&self, history: &[f64]) -> Result<f64> {
        if history.len() < self.order {
            return Err(Error::InsufficientData(format!(
                "AR({}) forecast needs {} past values, got {}",
                self.order,
                self.order,
                history.len()
            )));
        }
        let n = history.len();
        Ok(self.intercept + (1..=self.order).map(|j| self.coefficients[j - 1] * history[n - j]).sum::<f64>())
    }
}

/// Least-squares AR(p) on targets `y[start..]`; returns (coefficients with
/// intercept first, RSS).
fn least_squares_ar(y: &[f64], p: usize, start: usize) -> (DVector<f64>, f64) {
    let m = y.len() - start;
    let x = DMatrix::from_fn(m, p + 1, |i, j| if j == 0 { 1.0 } else { y[start + i - j] });
    let target = DVector::from_fn(m, |i, _| y[start + i]);
    let beta = x
        .clone()
        .svd(true, true)
        .solve(&target, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(p + 1));
    let rss = (&target - &x * &beta).norm_squared();
    (beta, rss)
}

/// Fit AR(p) for `p = 0..=max_p` by least squares on the common sample
/// `t = max_p..n` and keep the order minimizing
/// `AIC = n log(RSS / n) + 2 (p + 2)`; the chosen order is then refitted
/// on all `n - p` usable targets.
pub fn fit_ar(series: &[f64], max_p: usize) -> Result<ArModel> {
    if series.len() <= max_p + 10 {
        return Err(Error::InsufficientData(format!(
            "AR selection up to order {max_p} needs more than {} values, got {}",
            max_p + 10,
            series.len()
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Integrity("AR input contains non-finite values".into()));
    }
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let spread = series.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    if spread <= 1e-12 * mean.abs().max(1.0) {
        return Ok(ArModel {
            order: 0,
            coefficients: vec![],
            intercept: series[0],
            noise_variance: 0.0,
        });
    }
    let n = (series.len() - max_p) as f64;
    let mut best = (f64::INFINITY, 0);
    for p in 0..=max_p {
        let (_, rss) = least_squares_ar(series, p, max_p);
        let aic = n * (rss.max(f64::MIN_POSITIVE) / n).ln() + 2.0 * (p as f64 + 2.0);
        if aic < best.0 {
            best = (aic, p);
        }
    }
    let p = best.1;
    let (beta, rss) = least_squares_ar(series, p, p);
    Ok(ArModel {
        order: p,
        coefficients: beta.iter().skip(1).copied().collect(),
        intercept: beta[0],
        noise_variance: rss / (series.len() - p) as f64,
    })
}

/// One-step forecasts of `test.len()` values following `train`, with the
/// model fitted on `train` only; each forecast conditions on the actual
/// values observed before its target.
pub fn ar_forecast_lowres(train: &[f64], test: &[f64], max_p: usize) -> Result<Vec<f64>> {
    let model = fit_ar(train, max_p)?;
    let mut history = train.to_vec();
    let mut out = Vec::with_capacity(test.len());
    for &actual in test {
        out.push(model.forecast_next(&history)?);
        history.push(actual);
    }
    Ok(out)
}

/// Half-hourly baseline: one AR model per slot, fitted on that slot's daily
/// sub-series of `train_days`, forecasting each day in `test_days` one step
/// ahead. Returns per test day (max over slots, first argmax slot) and the
/// 48 slot forecasts.
pub fn ar_forecast_highres(
    train_days: &[Vec<f64>],
    test_days: &[Vec<f64>],
    max_p: usize,
) -> Result<Vec<(f64, usize, Vec<f64>)>> {
    let slots = train_days.first().map_or(0, Vec::len);
    if slots == 0 || train_days.iter().chain(test_days).any(|d| d.len() != slots) {
        return Err(Error::Integrity("half-hourly AR needs whole days of equal length".into()));
    }
    let mut per_slot: Vec<Vec<f64>> = Vec::with_capacity(slots);
    for s in 0..slots {
        let train: Vec<f64> = train_days.iter().map(|d| d[s]).collect();
        let test: Vec<f64> = test_days.iter().map(|d| d[s]).collect();
        per_slot.push(ar_forecast_lowres(&train, &test, max_p)?);
    }
    Ok((0..test_days.len())
        .map(|i| {
            let day: Vec<f64> = per_slot.iter().map(|f| f[i]).collect();
            let (dp, ip) = peak_of(&day);
            (dp, ip, day)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DailyRow;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn simulate_ar(phi: &[f64], c: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = Normal::new(0.0, 1.0).unwrap();
        let burn = 200;
        let mut y = vec![0.0; n + burn];
        for t in 0..n + burn {
            let mut v = c + e.sample(&mut rng);
            for (j, f) in phi.iter().enumerate() {
                if t > j {
                    v += f * y[t - j - 1];
                }
            }
            y[t] = v;
        }
        y.split_off(burn)
    }

    fn table_from(dps: &[f64], ips: &[usize]) -> DailyPeakTable {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let rows = (1..dps.len())
            .map(|i| DailyRow {
                date: d0 + chrono::Days::new(i as u64),
                dp: dps[i],
                ip: ips[i],
                dow: 0,
                toy: 0.0,
                temp_max: 0.0,
                temp_min: 0.0,
                temp95_max: 0.0,
                temp95_min: 0.0,
                dp24: dps[i - 1],
                ip24: ips[i - 1],
                mat_tem: vec![],
                mat_tem95: vec![],
                mat_lag: vec![],
                demand: vec![],
            })
            .collect();
        DailyPeakTable { rows, mat_int: vec![] }
    }

    #[test]
    fn persistence_repeats_the_lag() {
        let t = table_from(&[5.0, 5.0, 5.0, 5.0], &[3, 3, 3, 3]);
        assert!(persistence_forecast(&t).iter().zip(&t.rows).all(|(f, r)| f.0 == r.dp));
        let (a, b) = (100.0, 130.0);
        let dps: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { a } else { b }).collect();
        let t = table_from(&dps, &[0; 20]);
        let f = persistence_forecast(&t);
        let mae = f.iter().zip(&t.rows).map(|(f, r)| (f.0 - r.dp).abs()).sum::<f64>() / f.len() as f64;
        assert_eq!(mae, (a - b).abs());
        assert!(f.iter().zip(&t.rows).all(|(f, r)| f.0 == r.dp24 && f.1 == r.ip24));
    }

    #[test]
    fn white_noise_selects_order_zero() {
        let hits = (0..100)
            .filter(|&s| fit_ar(&simulate_ar(&[], 3.0, 500, s), 7).unwrap().order == 0)
            .count();
        // AIC is not consistent: with seven superfluous candidate orders its
        // asymptotic probability of choosing the true order is about 0.71
        assert!(hits >= 60, "{hits}");
    }

    #[test]
    fn ar2_is_recovered() {
        let hits = (0..100)
            .filter(|&s| {
                let m = fit_ar(&simulate_ar(&[0.5, -0.3], 1.0, 500, 1000 + s), 7).unwrap();
                m.order == 2 && (m.coefficients[0] - 0.5).abs() < 0.1 && (m.coefficients[1] + 0.3).abs() < 0.1
            })
            .count();
        // same AIC over-selection as above; the coefficients are always close
        assert!(hits >= 60, "{hits}");
        let close = (0..100)
            .filter(|&s| {
                let m = fit_ar(&simulate_ar(&[0.5, -0.3], 1.0, 500, 1000 + s), 7).unwrap();
                m.order >= 2 && (m.coefficients[0] - 0.5).abs() < 0.1 && (m.coefficients[1] + 0.3).abs() < 0.1
            })
            .count();
        assert!(close >= 90, "{close}");
    }

    #[test]
    fn constant_series_is_order_zero() {
        let m = fit_ar(&[4.25; 40], 7).unwrap();
        assert_eq!((m.order, m.intercept), (0, 4.25));
        assert_eq!(ar_forecast_lowres(&[4.25; 40], &[1.0, 2.0], 7).unwrap(), vec![4.25, 4.25]);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(matches!(fit_ar(&[1.0; 17], 7), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn order_zero_forecasts_the_training_mean() {
        let m = ArModel {
            order: 0,
            coefficients: vec![],
            intercept: 7.0,
            noise_variance: 1.0,
        };
        assert_eq!(m.forecast_next(&[1.0, 2.0]).unwrap(), 7.0);
        // white noise: AR(0) intercept is the sample mean
        let y = simulate_ar(&[], 2.0, 300, 3);
        let m = fit_ar(&y, 0).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((m.intercept - mean).abs() < 1e-10);
    }

    #[test]
    fn unit_root_ar1_is_persistence() {
        let m = ArModel {
            order: 1,
            coefficients: vec![1.0],
            intercept: 0.0,
            noise_variance: 1.0,
        };
        assert_eq!(m.forecast_next(&[3.0, 8.5]).unwrap(), 8.5);
    }

    #[test]
    fn one_step_forecasts_follow_hand_recursion() {
        let y = simulate_ar(&[0.6], 2.0, 400, 9);
        let (train, test) = y.split_at(300);
        let m = fit_ar(train, 1).unwrap();
        let f = ar_forecast_lowres(train, test, 1).unwrap();
        if m.order == 1 {
            for (i, v) in f.iter().enumerate() {
                let prev = if i == 0 { train[299] } else { test[i - 1] };
                assert!((v - (m.coefficients[0] * prev + m.intercept)).abs() < 1e-10);
            }
        } else {
            panic!("AR(1) data selected order {}", m.order);
        }
    }

    #[test]
    fn highres_takes_max_and_first_argmax() {
        // constant slots with slot 36 highest
        let day: Vec<f64> = (0..48).map(|s| if s == 36 { 10.0 } else { 1.0 + s as f64 * 0.01 }).collect();
        let days = vec![day.clone(); 30];
        let out = ar_forecast_highres(&days, &days[..3], 2).unwrap();
        assert!(out.iter().all(|(dp, ip, _)| *ip == 36 && *dp == 10.0));
        // tie between slots 5 and 9 resolves to 5
        let mut tie = vec![1.0; 48];
        tie[5] = 4.0;
        tie[9] = 4.0;
        let out = ar_forecast_highres(&vec![tie.clone(); 30], &[tie], 1).unwrap();
        assert_eq!(out[0].1, 5);
    }

    #[test]
    fn highres_slots_equal_independent_fits() {
        let mut days = vec![vec![0.0; 48]; 60];
        for s in 0..48 {
            let y = simulate_ar(&[0.4], s as f64, 60, 50 + s as u64);
            for d in 0..60 {
                days[d][s] = y[d];
            }
        }
        let (train, test) = days.split_at(45);
        let out = ar_forecast_highres(train, test, 3).unwrap();
        for s in [0, 17, 47] {
            let tr: Vec<f64> = train.iter().map(|d| d[s]).collect();
            let te: Vec<f64> = test.iter().map(|d| d[s]).collect();
            let own = ar_forecast_lowres(&tr, &te, 3).unwrap();
            for (i, v) in own.iter().enumerate() {
                assert_eq!(out[i].2[s], *v);
                assert!(out[i].0 >= *v);
            }
        }
    }
}
