//! Comparing two forecasters: a moving-block bootstrap of each one's error
//! metric and a Diebold-Mariano test on their daily loss differences.
//!
//! ```text
//! cargo run --release --example bootstrap_dm
//! ```

use peakcast::evaluation::{block_bootstrap, dm_test, quantile, BLOCK_LENGTH, BOOTSTRAP_SAMPLES};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> peakcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    // a year of daily absolute errors; model B is about 10% better, with
    // errors correlated across the two models and over consecutive days
    let common = Normal::new(0.0_f64, 1.0).expect("valid sd");
    let mut state = 0.0_f64;
    let (mut loss_a, mut loss_b) = (Vec::new(), Vec::new());
    for _ in 0..365 {
        state = 0.6 * state + common.sample(&mut rng);
        let shared: f64 = 400.0 + 150.0 * state;
        loss_a.push((shared + 60.0 * common.sample(&mut rng)).abs());
        loss_b.push((0.9 * shared + 60.0 * common.sample(&mut rng)).abs());
    }

    for (name, losses) in [("A", &loss_a), ("B", &loss_b)] {
        let samples = block_bootstrap(losses, BLOCK_LENGTH, BOOTSTRAP_SAMPLES, 5, mean)?;
        println!(
            "model {name}: MAE {:.1}, 95% bootstrap interval [{:.1}, {:.1}]",
            mean(losses),
            quantile(&samples, 0.025),
            quantile(&samples, 0.975)
        );
    }
    let dm = dm_test(&loss_a, &loss_b)?;
    println!(
        "Diebold-Mariano: statistic {:.2}, p-value {:.4} ({})",
        dm.statistic,
        dm.p_value,
        if dm.p_value < 0.05 { "B is significantly better" } else { "no significant difference" }
    );
    Ok(())
}
