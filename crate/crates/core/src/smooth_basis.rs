//! Spline bases, difference penalties and tensor-product design blocks.
//!
//! Smooth effects use clamped cubic B-spline bases on equally spaced knots
//! with difference penalties on adjacent coefficients (P-splines). Bivariate
//! interactions use row-wise Kronecker products of two marginal bases with
//! one penalty per margin. A functional term maps a 48-long covariate vector
//! to a scalar by summing the bivariate surface over the (value, slot) pairs
//! of the day:
//!
//! ```text
//! f(x_i) = sum_r sum_k sum_l beta_kl a_k(x_i[r]) b_l(t_r)
//! ```
//!
//! so its design row is the sum of the 48 per-slot tensor rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DEGREE: usize = 3;
pub const DEFAULT_PENALTY_ORDER: usize = 2;
/// Fractional expansion of the observed covariate range used for knots.
pub const RANGE_MARGIN: f64 = 0.05;

/// Clamped B-spline basis of `k` functions on `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    k: usize,
    degree: usize,
    min: f64,
    max: f64,
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn new(k: usize, degree: usize, range: (f64, f64)) -> Result<Self> {
        let (min, max) = range;
        if k < degree + 1 {
            return Err(Error::Parameter(format!(
                "basis size {k} is too small for degree {degree}"
            )));
        }
        if !(min < max) || !min.is_finite() || !max.is_finite() {
            return Err(Error::Parameter(format!("invalid knot range [{min}, {max}]")));
        }
        let interior = k - degree - 1;
        let mut knots = Vec::with_capacity(k + degree + 1);
        knots.extend(std::iter::repeat(min).take(degree + 1));
        for j in 1..=interior {
            knots.push(min + (max - min) * j as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat(max).take(degree + 1));
        Ok(Self {
            k,
            degree,
            min,
            max,
            knots,
        })
    }

    pub fn size(&self) -> usize {
        self.k
    }

    pub fn range(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    /// Evaluate all `k` basis functions at `x` into `out`. Values outside the
    /// knot range are an error unless `clamp` is set, in which case they are
    /// moved to the nearest boundary. Returns whether clamping happened.
    pub fn eval_into(&self, x: f64, clamp: bool, out: &mut [f64]) -> Result<bool> {
        debug_assert_eq!(out.len(), self.k);
        let mut clamped = false;
        let x = if x < self.min || x > self.max {
            if !clamp || x.is_nan() {
                return Err(Error::Domain {
                    value: x,
                    min: self.min,
                    max: self.max,
                });
            }
            clamped = true;
            x.clamp(self.min, self.max)
        } else {
            x
        };
        out.iter_mut().for_each(|v| *v = 0.0);
        let p = self.degree;
        // knot span: largest s in [p, k-1] with knots[s] <= x
        let span = if x >= self.max {
            self.k - 1
        } else {
            let mut lo = p;
            let mut hi = self.k;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.knots[mid] <= x {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        // Cox-de Boor triangle for the p+1 non-zero functions
        let mut n = [0.0f64; 8];
        let mut left = [0.0f64; 8];
        let mut right = [0.0f64; 8];
        debug_assert!(p < 8);
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = x - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - x;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom == 0.0 { 0.0 } else { n[r] / denom };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        for j in 0..=p {
            out[span - p + j] = n[j];
        }
        Ok(clamped)
    }

    pub fn eval(&self, x: f64, clamp: bool) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.k];
        self.eval_into(x, clamp, &mut out)?;
        Ok(out)
    }
}

/// Basis matrix with one row per value of `x`.
pub fn bspline_basis(
    x: &[f64],
    k: usize,
    degree: usize,
    range: (f64, f64),
    clamp: bool,
) -> Result<DMatrix<f64>> {
    let basis = BSplineBasis::new(k, degree, range)?;
    let mut m = DMatrix::zeros(x.len(), k);
    let mut row = vec![0.0; k];
    for (i, &v) in x.iter().enumerate() {
        basis.eval_into(v, clamp, &mut row)?;
        for j in 0..k {
            m[(i, j)] = row[j];
        }
    }
    Ok(m)
}

/// `D^T D` for the `order`-th difference operator on `k` coefficients.
pub fn difference_penalty(k: usize, order: usize) -> Result<DMatrix<f64>> {
    if order >= k {
        return Err(Error::Parameter(format!(
            "penalty order {order} must be below basis size {k}"
        )));
    }
    let mut d = DMatrix::<f64>::identity(k, k);
    for _ in 0..order {
        let rows = d.nrows() - 1;
        d = DMatrix::from_fn(rows, k, |i, j| d[(i + 1, j)] - d[(i, j)]);
    }
    Ok(d.transpose() * d)
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Data range expanded by [`RANGE_MARGIN`] on each side.
pub fn expanded_range(values: impl IntoIterator<Item = f64>) -> Result<(f64, f64)> {
    let (lo, hi) = values
        .into_iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::InsufficientData("cannot place knots on empty or non-finite data".into()));
    }
    let span = if hi > lo { hi - lo } else { lo.abs().max(1.0) };
    Ok((lo - RANGE_MARGIN * span, hi + RANGE_MARGIN * span))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothKind {
    Univariate,
    Tensor2,
    FunctionalTensor,
}

/// Declarative smooth: which covariates, how many basis functions per
/// margin, and (once bound to data) the knot range per margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTerm {
    pub kind: SmoothKind,
    pub covariates: Vec<String>,
    pub basis_sizes: Vec<usize>,
    pub penalty_order: usize,
    #[serde(default)]
    pub knot_range: Vec<(f64, f64)>,
}

impl SmoothTerm {
    pub fn univariate(cov: &str, k: usize) -> Self {
        Self {
            kind: SmoothKind::Univariate,
            covariates: vec![cov.into()],
            basis_sizes: vec![k],
            penalty_order: DEFAULT_PENALTY_ORDER,
            knot_range: Vec::new(),
        }
    }

    pub fn tensor(cov1: &str, cov2: &str, k1: usize, k2: usize) -> Self {
        Self {
            kind: SmoothKind::Tensor2,
            covariates: vec![cov1.into(), cov2.into()],
            basis_sizes: vec![k1, k2],
            penalty_order: DEFAULT_PENALTY_ORDER,
            knot_range: Vec::new(),
        }
    }

    pub fn functional(cov: &str, grid: &str, k1: usize, k2: usize) -> Self {
        Self {
            kind: SmoothKind::FunctionalTensor,
            ..Self::tensor(cov, grid, k1, k2)
        }
    }

    pub fn with_ranges(mut self, ranges: Vec<(f64, f64)>) -> Self {
        self.knot_range = ranges;
        self
    }

    pub fn margins(&self) -> usize {
        match self.kind {
            SmoothKind::Univariate => 1,
            _ => 2,
        }
    }

    pub fn label(&self) -> String {
        let sizes: Vec<String> = self.basis_sizes.iter().map(|k| k.to_string()).collect();
        let prefix = match self.kind {
            SmoothKind::Univariate => "s",
            SmoothKind::Tensor2 => "ti",
            SmoothKind::FunctionalTensor => "fti",
        };
        format!("{prefix}({})[{}]", self.covariates.join(","), sizes.join(","))
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.margins();
        if self.covariates.len() != m || self.basis_sizes.len() != m {
            return Err(Error::Parameter(format!(
                "{}: expected {m} covariates and basis sizes",
                self.label()
            )));
        }
        for &k in &self.basis_sizes {
            // a size-1 margin is a constant; allowed only as a degenerate tensor margin
            if k < 4 && !(k == 1 && m == 2) {
                return Err(Error::Parameter(format!("{}: basis sizes must be >= 4", self.label())));
            }
            if k > 1 && self.penalty_order >= k {
                return Err(Error::Parameter(format!(
                    "{}: penalty order {} must be below basis size {k}",
                    self.label(),
                    self.penalty_order
                )));
            }
        }
        if !self.knot_range.is_empty() {
            if self.knot_range.len() != m {
                return Err(Error::Parameter(format!("{}: expected {m} knot ranges", self.label())));
            }
            if self.knot_range.iter().any(|(a, b)| !(a < b)) {
                return Err(Error::Parameter(format!("{}: knot range min must be < max", self.label())));
            }
        }
        Ok(())
    }

    fn margin_basis(&self, j: usize) -> Result<Option<BSplineBasis>> {
        let k = self.basis_sizes[j];
        if k == 1 {
            return Ok(None);
        }
        let range = *self.knot_range.get(j).ok_or_else(|| {
            Error::Parameter(format!("{}: knot range not set", self.label()))
        })?;
        BSplineBasis::new(k, DEFAULT_DEGREE.min(k - 1), range).map(Some)
    }

    fn margin_penalty(&self, j: usize) -> Result<Option<DMatrix<f64>>> {
        let k = self.basis_sizes[j];
        if k == 1 {
            return Ok(None);
        }
        difference_penalty(k, self.penalty_order).map(Some)
    }
}

/// Realized basis columns and penalties of one smooth term.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBlock {
    pub columns: DMatrix<f64>,
    pub penalties: Vec<DMatrix<f64>>,
    pub term: SmoothTerm,
    /// Pending per-margin mean constraints (one entry per margin, `None` for
    /// margins left unconstrained). Consumed by [`apply_centering`].
    pub margin_means: Vec<Option<DVector<f64>>>,
    /// Map from raw basis coefficients to constrained ones; `None` until
    /// centering has run or when no constraint was needed.
    pub constraint: Option<DMatrix<f64>>,
    pub centered: bool,
    /// Number of evaluations that fell outside the knot range and were clamped.
    pub clamped: usize,
}

impl DesignBlock {
    pub fn width(&self) -> usize {
        self.columns.ncols()
    }

    /// Apply the stored constraint to a raw design matrix built for new data.
    pub fn transform(&self, raw: DMatrix<f64>) -> DMatrix<f64> {
        match &self.constraint {
            Some(z) => raw * z,
            None => raw,
        }
    }

    /// Null-space dimension of the summed penalty (unpenalized directions).
    pub fn null_space_dim(&self) -> usize {
        let p = self.width();
        if p == 0 {
            return 0;
        }
        let mut total = DMatrix::zeros(p, p);
        for s in &self.penalties {
            total += s / s.norm().max(f64::MIN_POSITIVE);
        }
        let eig = total.symmetric_eigen();
        let max = eig.eigenvalues.amax();
        eig.eigenvalues.iter().filter(|&&v| v.abs() <= 1e-9 * max.max(1e-300)).count()
    }
}

fn column_means(m: &DMatrix<f64>) -> DVector<f64> {
    let n = m.nrows().max(1) as f64;
    DVector::from_iterator(m.ncols(), m.column_iter().map(|c| c.sum() / n))
}

/// Orthonormal basis (p x (p-1)) of the complement of `c`, via one
/// Householder reflection. Columns `Z` satisfy `c^T Z = 0`.
pub fn sum_to_zero_basis(c: &DVector<f64>) -> DMatrix<f64> {
    let p = c.len();
    let norm = c.norm();
    if norm == 0.0 {
        return DMatrix::identity(p, p);
    }
    let mut u = c / norm;
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    u[0] += sign;
    let unorm = u.norm();
    u /= unorm;
    let h = DMatrix::identity(p, p) - 2.0 * &u * u.transpose();
    h.columns(1, p - 1).into_owned()
}

fn eval_margin(basis: &Option<BSplineBasis>, x: &[f64], clamped: &mut usize) -> DMatrix<f64> {
    match basis {
        None => DMatrix::from_element(x.len(), 1, 1.0),
        Some(b) => {
            let mut m = DMatrix::zeros(x.len(), b.size());
            let mut row = vec![0.0; b.size()];
            for (i, &v) in x.iter().enumerate() {
                if b.eval_into(v, true, &mut row).expect("clamped evaluation") {
                    *clamped += 1;
                }
                for (j, r) in row.iter().enumerate() {
                    m[(i, j)] = *r;
                }
            }
            m
        }
    }
}

fn margin_penalties(term: &SmoothTerm) -> Result<Vec<DMatrix<f64>>> {
    let (k, l) = (term.basis_sizes[0], term.basis_sizes[1]);
    let mut out = Vec::new();
    if let Some(s1) = term.margin_penalty(0)? {
        out.push(kron(&s1, &DMatrix::identity(l, l)));
    }
    if let Some(s2) = term.margin_penalty(1)? {
        out.push(kron(&DMatrix::identity(k, k), &s2));
    }
    Ok(out)
}

fn check_kind(term: &SmoothTerm, kind: SmoothKind) -> Result<()> {
    term.validate()?;
    if term.kind != kind {
        return Err(Error::Parameter(format!("{} is not a {kind:?} term", term.label())));
    }
    Ok(())
}

pub fn univariate_design(x: &[f64], term: &SmoothTerm) -> Result<DesignBlock> {
    check_kind(term, SmoothKind::Univariate)?;
    let mut clamped = 0;
    let columns = eval_margin(&term.margin_basis(0)?, x, &mut clamped);
    Ok(DesignBlock {
        columns,
        penalties: vec![term.margin_penalty(0)?.expect("univariate penalty")],
        term: term.clone(),
        margin_means: vec![None],
        constraint: None,
        centered: false,
        clamped,
    })
}

/// Row-wise Kronecker product design: column `k * L + l` holds
/// `a_k(x1) * b_l(x2)`. Both margins carry a pending mean constraint so the
/// centered block excludes the two main effects.
pub fn tensor2_design(x1: &[f64], x2: &[f64], term: &SmoothTerm) -> Result<DesignBlock> {
    check_kind(term, SmoothKind::Tensor2)?;
    if x1.len() != x2.len() {
        return Err(Error::Alignment(format!(
            "{}: covariate lengths {} and {} differ",
            term.label(),
            x1.len(),
            x2.len()
        )));
    }
    let mut clamped = 0;
    let a = eval_margin(&term.margin_basis(0)?, x1, &mut clamped);
    let b = eval_margin(&term.margin_basis(1)?, x2, &mut clamped);
    let (k, l) = (a.ncols(), b.ncols());
    let columns = DMatrix::from_fn(x1.len(), k * l, |i, c| a[(i, c / l)] * b[(i, c % l)]);
    let margin_means = vec![
        (k > 1).then(|| column_means(&a)),
        (l > 1).then(|| column_means(&b)),
    ];
    Ok(DesignBlock {
        columns,
        penalties: margin_penalties(term)?,
        term: term.clone(),
        margin_means,
        constraint: None,
        centered: false,
        clamped,
    })
}

/// Summed tensor-product design for a covariate observed on the slot grid.
///
/// `mat_x` holds one day per row. Row `i`, column `k * L + l` is
/// `sum_r a_k(mat_x[i][r]) * b_l(mat_t[r])`. The value margin carries a
/// pending mean constraint (pooled over every entry of `mat_x`): without it
/// any function of the slot alone would sum to a day-invariant constant and
/// be unidentifiable. The slot margin stays unconstrained so the summed
/// main effect of the covariate is retained.
pub fn functional_tensor_design(
    mat_x: &[Vec<f64>],
    mat_t: &[f64],
    term: &SmoothTerm,
) -> Result<DesignBlock> {
    check_kind(term, SmoothKind::FunctionalTensor)?;
    let f = mat_t.len();
    if let Some((i, row)) = mat_x.iter().enumerate().find(|(_, r)| r.len() != f) {
        return Err(Error::Shape {
            layer: format!("{} row {i}", term.label()),
            expected: format!("{f} columns"),
            got: format!("{} columns", row.len()),
        });
    }
    let mut clamped = 0;
    let a_basis = term.margin_basis(0)?;
    let b = eval_margin(&term.margin_basis(1)?, mat_t, &mut clamped);
    let k = a_basis.as_ref().map_or(1, |b| b.size());
    let l = b.ncols();
    let mut columns = DMatrix::zeros(mat_x.len(), k * l);
    let mut pooled = DVector::zeros(k);
    let mut a_row = vec![0.0; k];
    for (i, day) in mat_x.iter().enumerate() {
        for (r, &x) in day.iter().enumerate() {
            match &a_basis {
                None => a_row[0] = 1.0,
                Some(basis) => {
                    if basis.eval_into(x, true, &mut a_row)? {
                        clamped += 1;
                    }
                }
            }
            for kk in 0..k {
                let av = a_row[kk];
                if av == 0.0 {
                    continue;
                }
                pooled[kk] += av;
                for ll in 0..l {
                    columns[(i, kk * l + ll)] += av * b[(r, ll)];
                }
            }
        }
    }
    let count = (mat_x.len() * f).max(1) as f64;
    pooled /= count;
    Ok(DesignBlock {
        columns,
        penalties: margin_penalties(term)?,
        term: term.clone(),
        margin_means: vec![(k > 1).then_some(pooled), None],
        constraint: None,
        centered: false,
        clamped,
    })
}

/// Impose identifiability constraints on a raw block.
///
/// Pending margin constraints are applied first; then, if any column mean is
/// not already zero, one sum-to-zero constraint on the fitted term is
/// absorbed through an orthogonal null-space basis `Z` (`X -> X Z`,
/// `S -> Z^T S Z`), which removes the direction confounded with the
/// intercept and leaves every column with zero mean. The composed `Z` is
/// stored for prediction.
pub fn apply_centering(mut block: DesignBlock) -> DesignBlock {
    let p = block.columns.ncols();
    let mut z: Option<DMatrix<f64>> = None;

    if block.margin_means.iter().any(Option::is_some) {
        let sizes: Vec<usize> = match block.term.kind {
            SmoothKind::Univariate => vec![p],
            _ => block.term.basis_sizes.clone(),
        };
        let mut zm = DMatrix::identity(1, 1);
        for (j, m) in block.margin_means.iter().enumerate() {
            let part = match m {
                Some(means) => sum_to_zero_basis(means),
                None => DMatrix::identity(sizes[j], sizes[j]),
            };
            zm = kron(&zm, &part);
        }
        z = Some(zm);
    }
    let cols = match &z {
        Some(zm) => &block.columns * zm,
        None => block.columns.clone(),
    };
    let means = column_means(&cols);
    let scale = 1.0 + cols.amax();
    let (cols, z) = if means.amax() > 1e-13 * scale && cols.ncols() > 0 {
        let zb = sum_to_zero_basis(&means);
        let z = match z {
            Some(zm) => zm * &zb,
            None => zb,
        };
        (&block.columns * &z, Some(z))
    } else {
        (cols, z)
    };
    if let Some(zt) = &z {
        let composed = match &block.constraint {
            Some(prev) => prev * zt,
            None => zt.clone(),
        };
        block.penalties = block
            .penalties
            .iter()
            .map(|s| {
                let t = zt.transpose() * s * zt;
                // keep exact symmetry
                (&t + t.transpose()) * 0.5
            })
            .collect();
        block.constraint = Some(composed);
    }
    block.columns = cols;
    block.margin_means = vec![None; block.margin_means.len()];
    block.centered = true;
    block
}
