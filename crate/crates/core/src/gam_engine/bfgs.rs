//! Quasi-Newton minimizer with backtracking Armijo line search.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged when `max_i |g_i| * max(|x_i|, 1) <= tol * max(|f|, 1)`.
    pub tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsResult {
    pub x: DVector<f64>,
    pub f: f64,
    pub gradient: DVector<f64>,
    pub iterations: usize,
    /// Objective value after every accepted step (first entry is the start).
    pub trace: Vec<f64>,
}

fn relative_gradient(x: &DVector<f64>, g: &DVector<f64>, f: f64) -> f64 {
    let num = x
        .iter()
        .zip(g.iter())
        .map(|(xi, gi)| gi.abs() * xi.abs().max(1.0))
        .fold(0.0, f64::max);
    num / f.abs().max(1.0)
}

/// Minimize `objective`, which returns `None` outside the feasible region
/// and otherwise `(f, grad)`. `h0` seeds the inverse Hessian approximation.
pub fn minimize(
    mut objective: impl FnMut(&DVector<f64>) -> Option<(f64, DVector<f64>)>,
    x0: DVector<f64>,
    h0: Option<DMatrix<f64>>,
    opts: &BfgsOptions,
) -> Result<BfgsResult> {
    let d = x0.len();
    let (mut f, mut g) = objective(&x0).ok_or_else(|| {
        Error::Parameter("optimizer start point is infeasible".into())
    })?;
    if !f.is_finite() {
        return Err(Error::Parameter("objective is not finite at the start point".into()));
    }
    let mut x = x0;
    let mut h = h0.unwrap_or_else(|| DMatrix::identity(d, d));
    let mut trace = vec![f];
    let mut stalls = 0;

    for iter in 0..opts.max_iter {
        if relative_gradient(&x, &g, f) <= opts.tol {
            return Ok(BfgsResult {
                x,
                f,
                gradient: g,
                iterations: iter,
                trace,
            });
        }
        let mut dir = -(&h * &g);
        let mut slope = dir.dot(&g);
        if !(slope < 0.0) {
            // lost descent: restart from steepest descent
            h = DMatrix::identity(d, d);
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * step;
            if let Some((ft, gt)) = objective(&trial) {
                if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            // no feasible decrease along the direction
            let rg = relative_gradient(&x, &g, f);
            if rg <= opts.tol.sqrt() * 1e-1 {
                return Ok(BfgsResult {
                    x,
                    f,
                    gradient: g,
                    iterations: iter,
                    trace,
                });
            }
            if stalls == 0 {
                stalls += 1;
                h = DMatrix::identity(d, d);
                continue;
            }
            return Err(Error::Convergence {
                iterations: iter,
                gradient_norm: g.amax(),
            });
        };
        stalls = 0;
        let s = &xn - &x;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-10 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H+ = H - rho (H y s^T + s y^T H) + (rho^2 y^T H y + rho) s s^T
            h -= (&hy * s.transpose() + &s * hy.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let rel_change = (f - fn_).abs() / f.abs().max(1.0);
        x = xn;
        f = fn_;
        g = gn;
        trace.push(f);
        if rel_change < 1e-15 && relative_gradient(&x, &g, f) <= opts.tol.sqrt() * 1e-1 {
            return Ok(BfgsResult {
                x,
                f,
                gradient: g,
                iterations: iter + 1,
                trace,
            });
        }
    }
    if relative_gradient(&x, &g, f) <= opts.tol {
        return Ok(BfgsResult {
            x,
            f,
            gradient: g,
            iterations: opts.max_iter,
            trace,
        });
    }
    Err(Error::Convergence {
        iterations: opts.max_iter,
        gradient_norm: g.amax(),
    })
}
