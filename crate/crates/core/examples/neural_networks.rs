//! Feed-forward and convolutional peak forecasters trained from scratch:
//! a low-resolution dense network on daily summaries and a multi-resolution
//! network with 1-D convolutions over the intraday temperature paths.
//!
//! ```text
//! cargo run --release --example neural_networks -- [epochs]
//! ```

use chrono::NaiveDate;
use peakcast::evaluation::{mae, mape};
use peakcast::nn_engine::arch::{ArchConfig, NeuralModel};
use peakcast::nn_engine::{Architecture, Loss, NnTarget, Optimizer, TrainConfig};
use peakcast::synthetic::{SyntheticConfig, SyntheticData};

fn main() -> peakcast::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let data = SyntheticData::generate(&SyntheticConfig {
        days: 2 * 365,
        seed: 8,
        ..Default::default()
    })?;
    let table = data.prepared()?.daily_table()?;
    let split = NaiveDate::from_ymd_opt(2013, 5, 1).expect("valid date");
    let train = table.filter(|r| r.date < split);
    let test = table.filter(|r| r.date >= split);
    let cfg = TrainConfig {
        epochs,
        batch_size: 32,
        learning_rate: 1e-3,
        optimizer: Optimizer::Adam,
        seed: 1,
        loss: Loss::Mse,
    };
    let layers = ArchConfig::default();

    for arch in [Architecture::LrFcnn, Architecture::MrCnn] {
        let dp = NeuralModel::fit_daily(arch, NnTarget::Dp, &train.rows, &cfg, &layers)?;
        let ip = NeuralModel::fit_daily(arch, NnTarget::Ip, &train.rows, &cfg, &layers)?;
        let dp_hat = dp.predict_daily(&test.rows)?;
        let ip_hat: Vec<f64> = ip.predict_daily(&test.rows)?;
        let ip_actual: Vec<f64> = test.ip().iter().map(|&v| v as f64).collect();
        println!(
            "{arch:?}: {} parameters, final DP training loss {:.4}; test DP MAPE {:.2}%, IP MAE {:.2} half-hours",
            dp.network.parameter_count(),
            dp.loss_trace.last().copied().unwrap_or(f64::NAN),
            mape(&dp_hat, &test.dp())?,
            mae(&ip_hat, &ip_actual)?
        );
    }
    Ok(())
}
