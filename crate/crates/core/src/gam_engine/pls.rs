//! Penalized least squares, GCV and smoothing-parameter search.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A penalty matrix acting on the coefficient span `offset..offset+s.nrows()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub offset: usize,
    pub s: DMatrix<f64>,
}

impl Penalty {
    pub fn new(offset: usize, s: DMatrix<f64>) -> Self {
        Self { offset, s }
    }

    /// A penalty on the full coefficient vector.
    pub fn full(s: DMatrix<f64>) -> Self {
        Self { offset: 0, s }
    }

    pub fn width(&self) -> usize {
        self.s.nrows()
    }

    pub fn add_scaled_to(&self, target: &mut DMatrix<f64>, lambda: f64) {
        let w = self.width();
        let mut view = target.view_mut((self.offset, self.offset), (w, w));
        view += &self.s * lambda;
    }

    pub fn quadratic_form(&self, beta: &DVector<f64>) -> f64 {
        let b = beta.rows(self.offset, self.width());
        (b.transpose() * &self.s * b)[0]
    }

    /// `S beta`, embedded in a full-length vector accumulator.
    pub fn add_gradient(&self, beta: &DVector<f64>, lambda: f64, out: &mut DVector<f64>) {
        let w = self.width();
        let g = &self.s * beta.rows(self.offset, w) * lambda;
        let mut view = out.rows_mut(self.offset, w);
        view += g;
    }
}

pub fn total_penalty(p: usize, penalties: &[Penalty], lambdas: &[f64]) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(p, p);
    for (pen, &l) in penalties.iter().zip(lambdas) {
        pen.add_scaled_to(&mut s, l);
    }
    s
}

/// Cached cross products of a Gaussian problem; every quantity of a
/// penalized fit at given smoothing parameters is available from these.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub n: usize,
}

/// Result of one penalized least-squares solve.
#[derive(Debug, Clone)]
pub struct PlsSolution {
    pub beta: DVector<f64>,
    pub rss: f64,
    pub edf: f64,
    pub n: usize,
}

impl PlsSolution {
    pub fn gcv(&self) -> Result<f64> {
        let n = self.n as f64;
        if self.edf >= n - 1e-9 {
            return Err(Error::DegenerateFit {
                edf: self.edf,
                n: self.n,
            });
        }
        Ok(n * self.rss / (n - self.edf).powi(2))
    }
}

impl NormalEquations {
    pub fn new(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Alignment(format!(
                "design has {} rows but response has {}",
                x.nrows(),
                y.len()
            )));
        }
        Ok(Self {
            xtx: x.tr_mul(x),
            xty: x.tr_mul(y),
            yty: y.dot(y),
            n: y.len(),
        })
    }

    pub fn p(&self) -> usize {
        self.xtx.nrows()
    }

    fn factor(&self, penalties: &[Penalty], lambdas: &[f64]) -> Result<Cholesky<f64, Dyn>> {
        check_lambdas(penalties, lambdas)?;
        let mut m = self.xtx.clone();
        for (pen, &l) in penalties.iter().zip(lambdas) {
            pen.add_scaled_to(&mut m, l);
        }
        let chol = Cholesky::new(m).ok_or(Error::Rank)?;
        // reject numerically singular factors
        let d = chol.l_dirty().diagonal();
        let (lo, hi) = d.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
        if !(lo > hi * 1e-10) {
            return Err(Error::Rank);
        }
        Ok(chol)
    }

    pub fn solve(&self, penalties: &[Penalty], lambdas: &[f64]) -> Result<PlsSolution> {
        let chol = self.factor(penalties, lambdas)?;
        let beta = chol.solve(&self.xty);
        let fit_ss = (beta.transpose() * &self.xtx * &beta)[0];
        let rss = (self.yty - 2.0 * beta.dot(&self.xty) + fit_ss).max(0.0);
        let inv = chol.inverse();
        let edf = inv.component_mul(&self.xtx).sum();
        Ok(PlsSolution {
            beta,
            rss,
            edf,
            n: self.n,
        })
    }

    pub fn beta(&self, penalties: &[Penalty], lambdas: &[f64]) -> Result<DVector<f64>> {
        Ok(self.factor(penalties, lambdas)?.solve(&self.xty))
    }
}

fn check_lambdas(penalties: &[Penalty], lambdas: &[f64]) -> Result<()> {
    if penalties.len() != lambdas.len() {
        return Err(Error::Parameter(format!(
            "{} penalties but {} smoothing parameters",
            penalties.len(),
            lambdas.len()
        )));
    }
    if lambdas.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
        return Err(Error::Parameter("smoothing parameters must be finite and >= 0".into()));
    }
    Ok(())
}

/// `argmin ||y - X b||^2 + sum_j lambda_j b^T S_j b` via Cholesky.
pub fn fit_gaussian_pls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalties: &[Penalty],
    lambdas: &[f64],
) -> Result<DVector<f64>> {
    NormalEquations::new(x, y)?.beta(penalties, lambdas)
}

/// `n * RSS / (n - tr(A))^2`.
pub fn gcv_score(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalties: &[Penalty],
    lambdas: &[f64],
) -> Result<f64> {
    NormalEquations::new(x, y)?.solve(penalties, lambdas)?.gcv()
}

/// Trace of the influence matrix `X (X^T X + S_lambda)^{-1} X^T`.
pub fn edf(x: &DMatrix<f64>, penalties: &[Penalty], lambdas: &[f64]) -> Result<f64> {
    let ne = NormalEquations {
        xtx: x.tr_mul(x),
        xty: DVector::zeros(x.ncols()),
        yty: 0.0,
        n: x.nrows(),
    };
    Ok(ne.solve(penalties, lambdas)?.edf)
}

/// log10 smoothing-parameter grid: -4 to 6 in steps of 0.25.
pub fn lambda_grid() -> Vec<f64> {
    (0..=40).map(|i| -4.0 + 0.25 * i as f64).collect()
}

pub const SEARCH_SWEEPS: usize = 2;

/// Coordinate descent over the log10 grid. Each sweep visits every
/// smoothing parameter in turn and moves it to the grid point minimizing
/// `criterion` with the others held fixed. Starts from `start` (log10
/// values snapped to the grid). Failed evaluations score +inf; ties keep
/// the earlier grid point.
pub fn coordinate_search(
    n_penalties: usize,
    start: Option<&[f64]>,
    mut criterion: impl FnMut(&[f64]) -> f64,
) -> Vec<f64> {
    let grid = lambda_grid();
    let snap = |v: f64| {
        let mut best = 0;
        for (i, g) in grid.iter().enumerate() {
            if (g - v).abs() < (grid[best] - v).abs() {
                best = i;
            }
        }
        best
    };
    let mut idx: Vec<usize> = match start {
        Some(s) => s.iter().map(|l| snap(l.max(1e-300).log10())).collect(),
        None => vec![snap(0.0); n_penalties],
    };
    let to_lambdas = |idx: &[usize]| idx.iter().map(|&i| 10f64.powf(grid[i])).collect::<Vec<_>>();
    if n_penalties == 0 {
        return Vec::new();
    }
    for _ in 0..SEARCH_SWEEPS {
        for j in 0..n_penalties {
            let mut best = (f64::INFINITY, idx[j]);
            for g in 0..grid.len() {
                idx[j] = g;
                let score = criterion(&to_lambdas(&idx));
                let score = if score.is_nan() { f64::INFINITY } else { score };
                if score < best.0 {
                    best = (score, g);
                }
            }
            idx[j] = best.1;
        }
    }
    to_lambdas(&idx)
}

/// Local coordinate descent on the same log10 grid, for criteria that are
/// expensive to evaluate. Starting from `start` (snapped to the grid), each
/// sweep moves every smoothing parameter one grid step at a time in the
/// improving direction until neither neighbour improves. Stops after a
/// sweep without moves or after `max_sweeps`. Evaluations are cached.
pub fn local_search(start: &[f64], max_sweeps: usize, mut criterion: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let grid = lambda_grid();
    let snap = |v: f64| {
        let l = v.max(1e-300).log10();
        (0..grid.len())
            .min_by(|&a, &b| (grid[a] - l).abs().total_cmp(&(grid[b] - l).abs()))
            .unwrap_or(0)
    };
    let to_lambdas = |idx: &[usize]| idx.iter().map(|&i| 10f64.powf(grid[i])).collect::<Vec<_>>();
    let mut idx: Vec<usize> = start.iter().map(|&v| snap(v)).collect();
    if idx.is_empty() {
        return Vec::new();
    }
    let mut cache: std::collections::HashMap<Vec<usize>, f64> = std::collections::HashMap::new();
    let mut score = |idx: &[usize]| -> f64 {
        *cache.entry(idx.to_vec()).or_insert_with(|| {
            let s = criterion(&to_lambdas(idx));
            if s.is_nan() {
                f64::INFINITY
            } else {
                s
            }
        })
    };
    let mut current = score(&idx);
    for _ in 0..max_sweeps {
        let mut moved = false;
        for j in 0..idx.len() {
            for step in [-1i64, 1] {
                loop {
                    let next = idx[j] as i64 + step;
                    if next < 0 || next >= grid.len() as i64 {
                        break;
                    }
                    let mut trial = idx.clone();
                    trial[j] = next as usize;
                    let s = score(&trial);
                    if s < current {
                        idx = trial;
                        current = s;
                        moved = true;
                    } else {
                        break;
                    }
                }
            }
        }
        if !moved {
            break;
        }
    }
    to_lambdas(&idx)
}

/// GCV-minimizing smoothing parameters on the log10 grid.
pub fn optimize_lambdas(x: &DMatrix<f64>, y: &DVector<f64>, penalties: &[Penalty]) -> Result<Vec<f64>> {
    let ne = NormalEquations::new(x, y)?;
    Ok(optimize_lambdas_ne(&ne, penalties, None))
}

pub fn optimize_lambdas_ne(ne: &NormalEquations, penalties: &[Penalty], start: Option<&[f64]>) -> Vec<f64> {
    coordinate_search(penalties.len(), start, |l| {
        ne.solve(penalties, l)
            .and_then(|s| s.gcv())
            .unwrap_or(f64::INFINITY)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth_basis::{apply_centering, difference_penalty, univariate_design, SmoothTerm};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn unpenalized_limit_is_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(&mut rng, 6, 6);
        let y = DVector::from_fn(6, |_, _| rng.sample(StandardNormal));
        let pen = [Penalty::full(DMatrix::identity(6, 6))];
        let beta = fit_gaussian_pls(&x, &y, &pen, &[0.0]).unwrap();
        let ols = x.clone().lu().solve(&y).unwrap();
        assert!((beta - ols).amax() < 1e-8);
    }

    #[test]
    fn null_space_truth_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_matrix(&mut rng, 30, 5);
        let beta_true = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = &x * &beta_true;
        // second differences vanish on a linear sequence
        let pen = [Penalty::full(difference_penalty(5, 2).unwrap())];
        for lambda in [0.1, 10.0, 1e4] {
            let beta = fit_gaussian_pls(&x, &y, &pen, &[lambda]).unwrap();
            assert!((beta - &beta_true).amax() < 1e-8);
        }
    }

    #[test]
    fn matches_dense_inverse_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 50, 8);
        let y = DVector::from_fn(50, |_, _| rng.sample(StandardNormal));
        let s = difference_penalty(8, 2).unwrap();
        let pen = [Penalty::full(s.clone())];
        let beta = fit_gaussian_pls(&x, &y, &pen, &[1.0]).unwrap();
        let inv = (x.transpose() * &x + &s).try_inverse().unwrap();
        let oracle = inv * x.transpose() * &y;
        assert!((beta - oracle).amax() < 1e-8);
    }

    #[test]
    fn singular_system_reports_rank() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let pen = [Penalty::full(DMatrix::zeros(2, 2))];
        assert!(matches!(fit_gaussian_pls(&x, &y, &pen, &[1.0]), Err(Error::Rank)));
    }

    #[test]
    fn edf_limits_and_dense_hat_matrix() {
        let x: Vec<f64> = (0..80).map(|i| i as f64 / 79.0).collect();
        let term = SmoothTerm::univariate("x", 12).with_ranges(vec![(0.0, 1.0)]);
        let block = univariate_design(&x, &term).unwrap();
        let pen = [Penalty::full(block.penalties[0].clone())];
        let e0 = edf(&block.columns, &pen, &[0.0]).unwrap();
        assert!((e0 - 12.0).abs() < 1e-8);
        let inf = edf(&block.columns, &pen, &[1e12]).unwrap();
        assert!((inf - 2.0).abs() < 1e-3, "edf at large lambda = {inf}");

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xr = random_matrix(&mut rng, 40, 7);
        let s = difference_penalty(7, 2).unwrap();
        let pen = [Penalty::full(s.clone())];
        let a = &xr * (xr.transpose() * &xr + &s * 3.0).try_inverse().unwrap() * xr.transpose();
        assert!((edf(&xr, &pen, &[3.0]).unwrap() - a.trace()).abs() < 1e-6);
    }

    #[test]
    fn gcv_degenerate_and_saturated() {
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_element(1, 2.0);
        let pen = [Penalty::full(DMatrix::zeros(1, 1))];
        assert!(matches!(gcv_score(&x, &y, &pen, &[5.0]), Err(Error::DegenerateFit { .. })));
    }

    #[test]
    fn gcv_large_lambda_tends_to_null_space_projection() {
        // one centered smooth with second-order penalty: as lambda grows the
        // fit tends to the intercept plus the linear direction of the basis
        let n = 60;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y = DVector::from_fn(n, |i, _| (6.0 * x[i]).sin() + x[i]);
        let term = SmoothTerm::univariate("x", 10).with_ranges(vec![(0.0, 1.0)]);
        let block = apply_centering(univariate_design(&x, &term).unwrap());
        let mut design = DMatrix::from_element(n, 10, 1.0);
        design.columns_mut(1, 9).copy_from(&block.columns);
        let mut s = DMatrix::zeros(10, 10);
        s.view_mut((1, 1), (9, 9)).copy_from(&block.penalties[0]);
        let pen = [Penalty::full(s)];
        // analytic limit: least squares on the penalty null space, spanned by
        // the constant and the basis applied to linearly increasing
        // coefficients (a straight line except near the clamped boundaries)
        let raw = univariate_design(&x, &term).unwrap().columns;
        let ramp = &raw * DVector::from_fn(10, |j, _| j as f64);
        let line = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { ramp[i] });
        let coef = (line.transpose() * &line).try_inverse().unwrap() * line.transpose() * &y;
        let rss0 = (&y - &line * coef).norm_squared();
        let limit = n as f64 * rss0 / (n as f64 - 2.0).powi(2);
        let got = gcv_score(&design, &y, &pen, &[1e12]).unwrap();
        assert!((got - limit).abs() / limit < 1e-4, "{got} vs {limit}");
    }

    #[test]
    fn duplicated_rows_with_doubled_lambda_keep_minimizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 25, 6);
        let y = DVector::from_fn(25, |_, _| rng.sample(StandardNormal));
        let s = difference_penalty(6, 2).unwrap();
        let pen = [Penalty::full(s)];
        let b1 = fit_gaussian_pls(&x, &y, &pen, &[0.7]).unwrap();
        let x2 = DMatrix::from_fn(50, 6, |i, j| x[(i % 25, j)]);
        let y2 = DVector::from_fn(50, |i, _| y[i % 25]);
        let b2 = fit_gaussian_pls(&x2, &y2, &pen, &[1.4]).unwrap();
        assert!((b1 - b2).amax() < 1e-10);
        // GCV on the duplicated data, recomputed directly from its definition
        let ne = NormalEquations::new(&x2, &y2).unwrap();
        let sol = ne.solve(&pen, &[1.4]).unwrap();
        let fitted = &x2 * &sol.beta;
        let rss = (&y2 - fitted).norm_squared();
        let a = &x2 * (x2.transpose() * &x2 + &pen[0].s * 1.4).try_inverse().unwrap() * x2.transpose();
        let direct = 50.0 * rss / (50.0 - a.trace()).powi(2);
        assert!((sol.gcv().unwrap() - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn local_search_finds_separable_grid_minimum_without_repeats() {
        // minimum at log10 lambda = (1.5, -2.0); convex in each coordinate
        let mut seen = std::collections::HashSet::new();
        let mut evals = 0;
        let found = local_search(&[1.0, 1.0], 10, |l| {
            evals += 1;
            assert!(seen.insert(format!("{l:?}")), "repeated evaluation at {l:?}");
            (l[0].log10() - 1.5).powi(2) + 3.0 * (l[1].log10() + 2.0).powi(2)
        });
        assert!((found[0].log10() - 1.5).abs() < 1e-9 && (found[1].log10() + 2.0).abs() < 1e-9, "{found:?}");
        // far fewer evaluations than a full grid sweep
        assert!(evals < lambda_grid().len(), "{evals} evaluations");
        assert!(local_search(&[], 3, |_| 0.0).is_empty());
    }

    #[test]
    fn pure_noise_prefers_heavy_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 150;
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let term = SmoothTerm::univariate("x", 15).with_ranges(vec![(0.0, 1.0)]);
        let block = apply_centering(univariate_design(&x, &term).unwrap());
        let p = block.width() + 1;
        let mut design = DMatrix::from_element(n, p, 1.0);
        design.columns_mut(1, p - 1).copy_from(&block.columns);
        let mut hits = 0;
        for rep in 0..20 {
            let mut r = ChaCha8Rng::seed_from_u64(100 + rep);
            let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
            let pen = [Penalty::new(1, block.penalties[0].clone())];
            let lambdas = optimize_lambdas(&design, &y, &pen).unwrap();
            // exhaustive grid oracle for a single penalty
            let ne = NormalEquations::new(&design, &y).unwrap();
            let best = lambda_grid()
                .into_iter()
                .map(|g| (ne.solve(&pen, &[10f64.powf(g)]).unwrap().gcv().unwrap(), g))
                .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a });
            assert!((lambdas[0].log10() - best.1).abs() < 1e-9);
            let e = edf(&design, &pen, &lambdas).unwrap();
            // intercept + linear null direction + 1
            if e <= 3.0 {
                hits += 1;
            }
        }
        assert!(hits >= 14, "only {hits}/20 noise fits collapsed to the null space");
    }

    #[test]
    fn noiseless_sinusoid_is_recovered() {
        let n = 200;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let truth: Vec<f64> = x.iter().map(|v| (2.0 * std::f64::consts::PI * v).sin()).collect();
        let term = SmoothTerm::univariate("x", 20).with_ranges(vec![(0.0, 1.0)]);
        let block = apply_centering(univariate_design(&x, &term).unwrap());
        let p = block.width() + 1;
        let mut design = DMatrix::from_element(n, p, 1.0);
        design.columns_mut(1, p - 1).copy_from(&block.columns);
        let y = DVector::from_vec(truth.clone());
        let pen = [Penalty::new(1, block.penalties[0].clone())];
        let lambdas = optimize_lambdas(&design, &y, &pen).unwrap();
        let beta = fit_gaussian_pls(&design, &y, &pen, &lambdas).unwrap();
        let fit = &design * beta;
        let rmse = (fit.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n as f64).sqrt();
        assert!(rmse < 1e-2, "rmse {rmse}");
    }
}
