//! A functional tensor-product smooth: the response of each "day" is the sum
//! over its 48 half-hours of an unknown surface f(value, slot). The surface
//! is recovered from daily responses alone.
//!
//! ```text
//! cargo run --release --example functional_smooth
//! ```

use peakcast::evaluation::rmse;
use peakcast::features::slot_grid;
use peakcast::gam_engine::{fit, Family, FitOptions, Frame, ModelSpec, Response};
use peakcast::smooth_basis::SmoothTerm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Effect of a temperature `x` observed at slot `t`: only evening heat matters.
fn surface(x: f64, t: f64) -> f64 {
    let evening = (-((t - 36.0) / 5.0).powi(2)).exp();
    evening * (15.0 - x).max(0.0) * 0.4
}

fn simulate(rng: &mut ChaCha8Rng, n: usize) -> Frame {
    let grid = slot_grid();
    let noise = Normal::new(0.0, 1.0).expect("valid sd");
    let curves: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let level = rng.gen_range(0.0..22.0);
            let amp = rng.gen_range(1.0..6.0);
            grid.iter().map(|&t| level + amp * ((t - 28.0) / 48.0 * std::f64::consts::TAU).cos()).collect()
        })
        .collect();
    let y: Vec<f64> = curves
        .iter()
        .map(|c| c.iter().zip(&grid).map(|(&x, &t)| surface(x, t)).sum::<f64>() + noise.sample(rng))
        .collect();
    let mut frame = Frame {
        n,
        ..Default::default()
    };
    frame.matrices.insert("matTem".into(), curves);
    frame.grids.insert("matInt".into(), grid);
    frame.responses.insert("DP".into(), y);
    frame
}

fn main() -> peakcast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let train = simulate(&mut rng, 400);
    let test = simulate(&mut rng, 200);
    let spec = ModelSpec {
        response: Response::Dp,
        family: Family::Gaussian,
        parametric: vec![],
        smooths: vec![SmoothTerm::functional("matTem", "matInt", 10, 8)],
    };
    let model = fit(&spec, &train, &FitOptions::default())?;
    println!("edf {:.1}, smoothing parameters {:?}", model.edf, model.lambdas);

    let predicted = model.predict(&test)?.location;
    let actual = test.response(Response::Dp)?;
    let spread = rmse(actual, &vec![actual.iter().sum::<f64>() / actual.len() as f64; actual.len()])?;
    println!(
        "held-out RMSE {:.3} (noise sd 1.0; predicting the mean gives {:.3})",
        rmse(&predicted, actual)?,
        spread
    );
    Ok(())
}
