//! Additive model assembly, fitting and prediction.
//!
//! A [`ModelSpec`] names a response, a likelihood family, categorical
//! (parametric) effects and smooth terms. [`assemble`] binds it to a
//! [`Frame`], producing the design matrix `[intercept | dummies | smooth
//! blocks]`, one penalty per smoothing parameter, and a [`DesignPlan`] that
//! rebuilds the same columns on new data. Gaussian models are fitted by
//! penalized least squares with GCV smoothing selection; scaled-t, GEV and
//! ordered-categorical models by penalized maximum likelihood, with AIC
//! minimized by a local search over the same smoothing grid.

pub mod bfgs;
pub mod family;
pub mod pls;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{DailyPeakTable, HighResRow};
use crate::ingest::SLOTS_PER_DAY;
use crate::smooth_basis::{
    apply_centering, expanded_range, functional_tensor_design, tensor2_design, univariate_design,
    DesignBlock, SmoothKind, SmoothTerm,
};

pub use bfgs::{BfgsOptions, BfgsResult};
pub use family::LikFamily;
pub use pls::{
    edf, fit_gaussian_pls, gcv_score, lambda_grid, optimize_lambdas, NormalEquations, Penalty,
};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Response {
    Dp,
    Ip,
    HalfhourlyLoad,
}

impl Response {
    pub fn column(&self) -> &'static str {
        match self {
            Response::Dp => "DP",
            Response::Ip => "IP",
            Response::HalfhourlyLoad => "load",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    ScaledT,
    Gev,
    Ocat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub response: Response,
    pub family: Family,
    /// Categorical covariates entered with treatment coding.
    pub parametric: Vec<String>,
    pub smooths: Vec<SmoothTerm>,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match (self.family, self.response) {
            (Family::Ocat, Response::Ip) => {}
            (Family::Ocat, r) => {
                return Err(Error::Parameter(format!("ocat family needs the IP response, got {r:?}")))
            }
            (Family::ScaledT | Family::Gev, Response::Dp) => {}
            (Family::ScaledT | Family::Gev, r) => {
                return Err(Error::Parameter(format!(
                    "{:?} family needs the DP response, got {r:?}",
                    self.family
                )))
            }
            (Family::Gaussian, _) => {}
        }
        for t in &self.smooths {
            t.validate()?;
        }
        Ok(())
    }

    /// Half-hourly Gaussian model over all (day, slot) rows.
    pub fn highres_gaussian() -> Self {
        Self {
            response: Response::HalfhourlyLoad,
            family: Family::Gaussian,
            parametric: vec!["dow".into(), "t".into()],
            smooths: vec![
                SmoothTerm::univariate("toy", 20),
                SmoothTerm::univariate("temp", 20),
                SmoothTerm::univariate("temp95", 24),
                SmoothTerm::tensor("temp", "t", 5, 5),
                SmoothTerm::tensor("temp95", "t", 5, 5),
                SmoothTerm::tensor("load24", "t", 5, 5),
                SmoothTerm::tensor("toy", "t", 5, 5),
            ],
        }
    }

    /// Daily-aggregate model for DP or IP.
    pub fn lowres(family: Family, response: Response) -> Self {
        Self {
            response,
            family,
            parametric: vec!["dow".into()],
            smooths: vec![
                SmoothTerm::univariate("IP24", 10),
                SmoothTerm::univariate("toy", 20),
                SmoothTerm::univariate("DP24", 20),
                SmoothTerm::univariate("tempMax", 20),
                SmoothTerm::univariate("temp95Max", 20),
                SmoothTerm::univariate("tempMin", 20),
                SmoothTerm::univariate("temp95Min", 20),
            ],
        }
    }

    /// Daily response with functional tensor terms on the intraday vectors.
    pub fn multires(family: Family, response: Response) -> Self {
        Self {
            response,
            family,
            parametric: vec!["dow".into()],
            smooths: vec![
                SmoothTerm::univariate("toy", 20),
                SmoothTerm::functional("matTem", "matInt", 15, 10),
                SmoothTerm::functional("matTem95", "matInt", 5, 5),
                SmoothTerm::functional("matLag", "matInt", 5, 5),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Factor {
    pub codes: Vec<usize>,
    pub levels: usize,
}

/// Named columns of one modelling dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Frame {
    pub n: usize,
    pub scalars: BTreeMap<String, Vec<f64>>,
    pub factors: BTreeMap<String, Factor>,
    pub matrices: BTreeMap<String, Vec<Vec<f64>>>,
    pub grids: BTreeMap<String, Vec<f64>>,
    pub responses: BTreeMap<String, Vec<f64>>,
}

impl Frame {
    pub fn from_daily(table: &DailyPeakTable) -> Self {
        let rows = &table.rows;
        let col = |f: &dyn Fn(&crate::features::DailyRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let mut frame = Frame {
            n: rows.len(),
            ..Default::default()
        };
        frame.scalars.insert("toy".into(), col(&|r| r.toy));
        frame.scalars.insert("tempMax".into(), col(&|r| r.temp_max));
        frame.scalars.insert("tempMin".into(), col(&|r| r.temp_min));
        frame.scalars.insert("temp95Max".into(), col(&|r| r.temp95_max));
        frame.scalars.insert("temp95Min".into(), col(&|r| r.temp95_min));
        frame.scalars.insert("DP24".into(), col(&|r| r.dp24));
        frame.scalars.insert("IP24".into(), col(&|r| r.ip24 as f64));
        frame.factors.insert(
            "dow".into(),
            Factor {
                codes: rows.iter().map(|r| r.dow).collect(),
                levels: 7,
            },
        );
        frame.matrices.insert("matTem".into(), rows.iter().map(|r| r.mat_tem.clone()).collect());
        frame.matrices.insert("matTem95".into(), rows.iter().map(|r| r.mat_tem95.clone()).collect());
        frame.matrices.insert("matLag".into(), rows.iter().map(|r| r.mat_lag.clone()).collect());
        frame.grids.insert("matInt".into(), table.mat_int.clone());
        frame.responses.insert("DP".into(), col(&|r| r.dp));
        frame.responses.insert("IP".into(), col(&|r| r.ip as f64));
        frame
    }

    pub fn from_highres(rows: &[HighResRow]) -> Self {
        let col = |f: &dyn Fn(&HighResRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let mut frame = Frame {
            n: rows.len(),
            ..Default::default()
        };
        frame.scalars.insert("toy".into(), col(&|r| r.toy));
        frame.scalars.insert("temp".into(), col(&|r| r.temp));
        frame.scalars.insert("temp95".into(), col(&|r| r.temp95));
        frame.scalars.insert("load24".into(), col(&|r| r.load24));
        frame.scalars.insert("t".into(), col(&|r| r.t as f64));
        frame.factors.insert(
            "dow".into(),
            Factor {
                codes: rows.iter().map(|r| r.dow).collect(),
                levels: 7,
            },
        );
        frame.factors.insert(
            "t".into(),
            Factor {
                codes: rows.iter().map(|r| r.t).collect(),
                levels: SLOTS_PER_DAY,
            },
        );
        frame.responses.insert("load".into(), col(&|r| r.load));
        frame
    }

    pub fn scalar(&self, name: &str) -> Result<&[f64]> {
        self.scalars
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCovariate(name.into()))
    }

    pub fn factor(&self, name: &str) -> Result<&Factor> {
        self.factors.get(name).ok_or_else(|| Error::UnknownCovariate(name.into()))
    }

    pub fn matrix(&self, name: &str) -> Result<&[Vec<f64>]> {
        self.matrices
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCovariate(name.into()))
    }

    pub fn grid(&self, name: &str) -> Result<&[f64]> {
        self.grids
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCovariate(name.into()))
    }

    pub fn response(&self, r: Response) -> Result<&[f64]> {
        self.responses
            .get(r.column())
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownCovariate(r.column().into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorColumns {
    pub name: String,
    /// Non-reference levels seen in training; one dummy column each.
    pub levels: Vec<usize>,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedSmooth {
    pub term: SmoothTerm,
    pub constraint: Option<DMatrix<f64>>,
    pub offset: usize,
    pub width: usize,
    pub null_space_dim: usize,
}

/// Everything needed to rebuild training columns on new data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPlan {
    pub intercept: bool,
    pub factors: Vec<FactorColumns>,
    pub smooths: Vec<RealizedSmooth>,
    pub p: usize,
}

fn raw_block(term: &SmoothTerm, frame: &Frame) -> Result<DesignBlock> {
    match term.kind {
        SmoothKind::Univariate => univariate_design(frame.scalar(&term.covariates[0])?, term),
        SmoothKind::Tensor2 => tensor2_design(
            frame.scalar(&term.covariates[0])?,
            frame.scalar(&term.covariates[1])?,
            term,
        ),
        SmoothKind::FunctionalTensor => functional_tensor_design(
            frame.matrix(&term.covariates[0])?,
            frame.grid(&term.covariates[1])?,
            term,
        ),
    }
}

fn bind_ranges(term: &SmoothTerm, frame: &Frame) -> Result<SmoothTerm> {
    if !term.knot_range.is_empty() {
        return Ok(term.clone());
    }
    let ranges = match term.kind {
        SmoothKind::Univariate => vec![expanded_range(frame.scalar(&term.covariates[0])?.iter().copied())?],
        SmoothKind::Tensor2 => vec![
            expanded_range(frame.scalar(&term.covariates[0])?.iter().copied())?,
            expanded_range(frame.scalar(&term.covariates[1])?.iter().copied())?,
        ],
        SmoothKind::FunctionalTensor => vec![
            expanded_range(frame.matrix(&term.covariates[0])?.iter().flatten().copied())?,
            expanded_range(frame.grid(&term.covariates[1])?.iter().copied())?,
        ],
    };
    Ok(term.clone().with_ranges(ranges))
}

impl DesignPlan {
    /// Design matrix for `frame`, plus how many basis evaluations were clamped.
    pub fn design(&self, frame: &Frame) -> Result<(DMatrix<f64>, usize)> {
        let n = frame.n;
        let mut x = DMatrix::zeros(n, self.p);
        if self.intercept {
            x.column_mut(0).fill(1.0);
        }
        for fc in &self.factors {
            let f = frame.factor(&fc.name)?;
            for (i, &code) in f.codes.iter().enumerate() {
                if let Some(j) = fc.levels.iter().position(|&l| l == code) {
                    x[(i, fc.offset + j)] = 1.0;
                }
            }
        }
        let mut clamped = 0;
        for rs in &self.smooths {
            let block = raw_block(&rs.term, frame)?;
            clamped += block.clamped;
            let cols = match &rs.constraint {
                Some(z) => block.columns * z,
                None => block.columns,
            };
            x.columns_mut(rs.offset, rs.width).copy_from(&cols);
        }
        Ok((x, clamped))
    }
}

/// Design, penalties and response bound from a spec and a frame.
#[derive(Debug, Clone)]
pub struct Assembled {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub penalties: Vec<Penalty>,
    pub plan: DesignPlan,
}

impl Assembled {
    pub fn null_space_dim(&self) -> usize {
        let parametric = self.plan.smooths.first().map_or(self.plan.p, |s| s.offset);
        parametric + self.plan.smooths.iter().map(|s| s.null_space_dim).sum::<usize>()
    }
}

pub fn assemble(spec: &ModelSpec, frame: &Frame) -> Result<Assembled> {
    spec.validate()?;
    if frame.n == 0 {
        return Err(Error::InsufficientData("cannot assemble a model on empty data".into()));
    }
    let y = DVector::from_column_slice(frame.response(spec.response)?);
    // the ordered-categorical cut points absorb the intercept
    let intercept = spec.family != Family::Ocat;
    let mut offset = usize::from(intercept);
    let mut factors = Vec::new();
    for name in &spec.parametric {
        let f = frame.factor(name)?;
        let mut seen = vec![false; f.levels];
        for &c in &f.codes {
            if c >= f.levels {
                return Err(Error::Integrity(format!("{name}: level {c} out of range")));
            }
            seen[c] = true;
        }
        // level 0 is the reference when an intercept is present
        let first = usize::from(intercept);
        let levels: Vec<usize> = (first..f.levels).filter(|&l| seen[l]).collect();
        factors.push(FactorColumns {
            name: name.clone(),
            levels: levels.clone(),
            offset,
        });
        offset += levels.len();
    }
    let mut blocks = Vec::new();
    for term in &spec.smooths {
        let bound = bind_ranges(term, frame)?;
        let block = apply_centering(raw_block(&bound, frame)?);
        blocks.push(block);
    }
    let mut smooths = Vec::new();
    let mut penalties = Vec::new();
    for block in &blocks {
        let width = block.width();
        // scale penalties to the size of the block's cross-product so one
        // smoothing grid suits every term
        let xtx_norm = block.columns.tr_mul(&block.columns).norm();
        for s in &block.penalties {
            let scale = if s.norm() > 0.0 { xtx_norm / s.norm() } else { 1.0 };
            penalties.push(Penalty::new(offset, s * scale));
        }
        smooths.push(RealizedSmooth {
            term: block.term.clone(),
            constraint: block.constraint.clone(),
            offset,
            width,
            null_space_dim: block.null_space_dim(),
        });
        offset += width;
    }
    let plan = DesignPlan {
        intercept,
        factors,
        smooths,
        p: offset,
    };
    let mut x = DMatrix::zeros(frame.n, plan.p);
    if intercept {
        x.column_mut(0).fill(1.0);
    }
    for fc in &plan.factors {
        let f = frame.factor(&fc.name)?;
        for (i, &code) in f.codes.iter().enumerate() {
            if let Some(j) = fc.levels.iter().position(|&l| l == code) {
                x[(i, fc.offset + j)] = 1.0;
            }
        }
    }
    for (rs, block) in plan.smooths.iter().zip(&blocks) {
        x.columns_mut(rs.offset, rs.width).copy_from(&block.columns);
    }
    Ok(Assembled {
        x,
        y,
        penalties,
        plan,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FamilyParams {
    Gaussian { sigma: f64 },
    ScaledT { scale: f64, dof: f64 },
    Gev { scale: f64, shape: f64 },
    Ocat { cut_points: Vec<f64> },
}

impl FamilyParams {
    pub fn count(&self) -> usize {
        match self {
            FamilyParams::Gaussian { .. } => 1,
            FamilyParams::ScaledT { .. } | FamilyParams::Gev { .. } => 2,
            FamilyParams::Ocat { cut_points } => cut_points.len(),
        }
    }

    fn theta(&self) -> Vec<f64> {
        match self {
            FamilyParams::Gaussian { sigma } => vec![sigma.ln()],
            FamilyParams::ScaledT { scale, dof } => vec![scale.ln(), (dof - 2.0).ln()],
            FamilyParams::Gev { scale, shape } => vec![scale.ln(), *shape],
            FamilyParams::Ocat { cut_points } => family::ocat_theta(cut_points),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub version: u32,
    pub spec: ModelSpec,
    pub plan: DesignPlan,
    pub coefficients: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub family_params: FamilyParams,
    pub edf: f64,
    pub loglik: f64,
    pub aic: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
    /// Skip smoothing selection and use these values.
    pub lambdas: Option<Vec<f64>>,
    /// Starting point of the smoothing search.
    pub lambda_start: Option<Vec<f64>>,
    pub ocat_categories: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            lambdas: None,
            lambda_start: None,
            ocat_categories: SLOTS_PER_DAY,
        }
    }
}

pub fn gaussian_loglik(rss: f64, n: usize) -> f64 {
    let n = n as f64;
    let sigma2 = (rss / n).max(f64::MIN_POSITIVE);
    -0.5 * n * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0)
}

/// `-2 loglik + 2 (edf + family parameters)`.
pub fn aic_value(loglik: f64, edf: f64, family_params: usize) -> f64 {
    -2.0 * loglik + 2.0 * (edf + family_params as f64)
}

/// Penalized likelihood fit at fixed smoothing parameters.
#[derive(Debug, Clone)]
pub struct LikFit {
    pub beta: DVector<f64>,
    pub theta: Vec<f64>,
    pub loglik: f64,
    pub edf: f64,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

struct LikProblem<'a> {
    family: LikFamily,
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    penalties: &'a [Penalty],
    lambdas: &'a [f64],
}

impl LikProblem<'_> {
    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn loglik(&self, beta: &DVector<f64>, theta: &[f64]) -> Option<f64> {
        let mu = self.x * beta;
        let mut scratch = vec![0.0; theta.len()];
        let mut total = 0.0;
        for i in 0..self.y.len() {
            total += self.family.obs(self.y[i], mu[i], theta, &mut scratch)?.loglik;
        }
        Some(total)
    }

    /// Penalized negative log-likelihood and its gradient in `(beta, theta)`.
    fn objective(&self, params: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let p = self.p();
        let beta = params.rows(0, p).into_owned();
        let theta: Vec<f64> = params.iter().skip(p).copied().collect();
        if theta.iter().any(|v| !v.is_finite()) || theta.iter().any(|v| v.abs() > 700.0) {
            return None;
        }
        let mu = self.x * &beta;
        let mut d_mu = DVector::zeros(self.y.len());
        let mut g_theta = vec![0.0; theta.len()];
        let mut ll = 0.0;
        for i in 0..self.y.len() {
            let o = self.family.obs(self.y[i], mu[i], &theta, &mut g_theta)?;
            ll += o.loglik;
            d_mu[i] = o.d_mu;
        }
        let mut g_beta = -self.x.tr_mul(&d_mu);
        let mut pen = 0.0;
        for (s, &l) in self.penalties.iter().zip(self.lambdas) {
            pen += 0.5 * l * s.quadratic_form(&beta);
            s.add_gradient(&beta, l, &mut g_beta);
        }
        let mut theta_pen_grad = vec![0.0; theta.len()];
        pen += self.family.theta_penalty(&theta, &mut theta_pen_grad);
        let f = -ll + pen;
        if !f.is_finite() {
            return None;
        }
        let mut grad = DVector::zeros(params.len());
        grad.rows_mut(0, p).copy_from(&g_beta);
        for j in 0..theta.len() {
            grad[p + j] = -g_theta[j] + theta_pen_grad[j];
        }
        Some((f, grad))
    }

    fn weighted_cross_product(&self, beta: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let mu = self.x * beta;
        let w = DVector::from_iterator(mu.len(), mu.iter().map(|&m| self.family.mu_information(m, theta)));
        let mut xw = self.x.clone();
        for (j, mut col) in xw.column_iter_mut().enumerate() {
            let _ = j;
            col.component_mul_assign(&w);
        }
        self.x.tr_mul(&xw)
    }

    fn edf(&self, beta: &DVector<f64>, theta: &[f64]) -> f64 {
        let h = self.weighted_cross_product(beta, theta);
        let mut m = h.clone();
        for (s, &l) in self.penalties.iter().zip(self.lambdas) {
            s.add_scaled_to(&mut m, l);
        }
        match m.cholesky() {
            Some(c) => c.inverse().component_mul(&h).sum(),
            None => self.p() as f64,
        }
    }

    fn initial_inverse_hessian(&self, beta: &DVector<f64>, theta: &[f64]) -> DMatrix<f64> {
        let p = self.p();
        let d = p + theta.len();
        let mut h0 = DMatrix::zeros(d, d);
        let mut m = self.weighted_cross_product(beta, theta);
        for (s, &l) in self.penalties.iter().zip(self.lambdas) {
            s.add_scaled_to(&mut m, l);
        }
        let ridge = 1e-8 * m.diagonal().amax().max(1.0);
        for i in 0..p {
            m[(i, i)] += ridge;
        }
        match m.cholesky() {
            Some(c) => h0.view_mut((0, 0), (p, p)).copy_from(&c.inverse()),
            None => h0.view_mut((0, 0), (p, p)).fill_with_identity(),
        }
        let n = self.y.len().max(1) as f64;
        for j in p..d {
            h0[(j, j)] = 1.0 / n;
        }
        h0
    }
}

fn start_values(
    family: LikFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalties: &[Penalty],
    lambdas: &[f64],
    intercept: bool,
) -> (DVector<f64>, Vec<f64>) {
    let p = x.ncols();
    match family {
        LikFamily::Ocat { categories } => {
            let n = y.len() as f64;
            let mut counts = vec![0.0; categories];
            for &v in y.iter() {
                counts[(v as usize).min(categories - 1)] += 1.0;
            }
            let mut cum = 0.0;
            let mut cuts = Vec::with_capacity(categories - 1);
            for k in 0..categories - 1 {
                cum += counts[k];
                let q = (cum + 0.5) / (n + 1.0);
                let c = (q / (1.0 - q)).ln();
                let prev = cuts.last().copied().unwrap_or(f64::NEG_INFINITY);
                cuts.push(c.max(prev + 1e-3));
            }
            (DVector::zeros(p), family::ocat_theta(&cuts))
        }
        LikFamily::ScaledT | LikFamily::Gev => {
            let beta = NormalEquations::new(x, y)
                .and_then(|ne| ne.beta(penalties, lambdas))
                .unwrap_or_else(|_| {
                    let mut b = DVector::zeros(p);
                    if intercept {
                        b[0] = y.mean();
                    }
                    b
                });
            let resid = y - x * &beta;
            let sd = (resid.norm_squared() / y.len().max(1) as f64).sqrt().max(1e-8);
            match family {
                LikFamily::ScaledT => (beta, vec![(sd / 2f64.sqrt()).ln(), 2f64.ln()]),
                _ => {
                    let sigma = sd * 6f64.sqrt() / std::f64::consts::PI;
                    let mut beta = beta;
                    if intercept {
                        beta[0] -= 0.5772156649 * sigma;
                    }
                    (beta, vec![sigma.ln(), 0.05])
                }
            }
        }
    }
}

/// Maximize the penalized log-likelihood at fixed smoothing parameters.
pub fn fit_likelihood(
    family: LikFamily,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    penalties: &[Penalty],
    lambdas: &[f64],
    warm: Option<(&DVector<f64>, &[f64])>,
    intercept: bool,
    opts: &BfgsOptions,
) -> Result<LikFit> {
    if x.nrows() != y.len() {
        return Err(Error::Alignment(format!("design has {} rows, response {}", x.nrows(), y.len())));
    }
    let prob = LikProblem {
        family,
        x,
        y,
        penalties,
        lambdas,
    };
    let (beta0, theta0) = match warm {
        Some((b, t)) if prob.loglik(b, t).is_some() => (b.clone(), t.to_vec()),
        _ => start_values(family, x, y, penalties, lambdas, intercept),
    };
    let p = x.ncols();
    let mut params = DVector::zeros(p + theta0.len());
    params.rows_mut(0, p).copy_from(&beta0);
    for (j, t) in theta0.iter().enumerate() {
        params[p + j] = *t;
    }
    let h0 = prob.initial_inverse_hessian(&beta0, &theta0);
    let res = bfgs::minimize(|v| prob.objective(v), params, Some(h0), opts)?;
    let beta = res.x.rows(0, p).into_owned();
    let theta: Vec<f64> = res.x.iter().skip(p).copied().collect();
    let loglik = prob.loglik(&beta, &theta).ok_or_else(|| {
        Error::Parameter("optimum lies outside the likelihood support".into())
    })?;
    let edf = prob.edf(&beta, &theta);
    Ok(LikFit {
        beta,
        theta,
        loglik,
        edf,
        iterations: res.iterations,
        trace: res.trace,
    })
}

fn lik_family(family: Family, opts: &FitOptions) -> LikFamily {
    match family {
        Family::ScaledT => LikFamily::ScaledT,
        Family::Gev => LikFamily::Gev,
        Family::Ocat => LikFamily::Ocat {
            categories: opts.ocat_categories,
        },
        Family::Gaussian => unreachable!("Gaussian models use penalized least squares"),
    }
}

/// Sweep cap of the local smoothing search for likelihood families.
pub const LIK_SEARCH_SWEEPS: usize = 4;

/// Starting smoothing parameters for a likelihood family, on the scale of
/// the (standardized) response in `asm`: the caller's start if given,
/// otherwise the GCV optimum of a Gaussian fit divided by that fit's
/// residual variance, which puts the penalty on the log-likelihood scale.
fn likelihood_start(asm: &Assembled, opts: &FitOptions, lambda_scale: f64) -> Vec<f64> {
    if let Some(s) = &opts.lambda_start {
        return s.iter().map(|l| l * lambda_scale).collect();
    }
    let gaussian = NormalEquations::new(&asm.x, &asm.y).map(|ne| {
        let l = pls::optimize_lambdas_ne(&ne, &asm.penalties, None);
        let var = ne.solve(&asm.penalties, &l).map(|s| s.rss / s.n.max(1) as f64);
        (l, var)
    });
    match gaussian {
        Ok((l, Ok(var))) if var > 0.0 => l.iter().map(|v| v / var).collect(),
        Ok((l, _)) => l,
        Err(_) => vec![1.0; asm.penalties.len()],
    }
}

/// Location and scale used to standardize a continuous likelihood response.
fn response_scaling(y: &DVector<f64>, intercept: bool) -> (f64, f64) {
    let n = y.len().max(1) as f64;
    let mean = y.mean();
    let sd = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
    (if intercept { mean } else { 0.0 }, scale)
}

/// Fit an assembled model: smoothing selection (unless fixed) then the
/// final fit at the selected smoothing parameters.
pub fn fit_assembled(spec: &ModelSpec, asm: Assembled, opts: &FitOptions) -> Result<FittedModel> {
    let n = asm.y.len();
    if let Some(l) = &opts.lambdas {
        if l.len() != asm.penalties.len() {
            return Err(Error::Parameter(format!(
                "{} fixed smoothing parameters for {} penalties",
                l.len(),
                asm.penalties.len()
            )));
        }
    }
    match spec.family {
        Family::Gaussian => {
            let ne = NormalEquations::new(&asm.x, &asm.y)?;
            let lambdas = match &opts.lambdas {
                Some(l) => l.clone(),
                None => pls::optimize_lambdas_ne(&ne, &asm.penalties, opts.lambda_start.as_deref()),
            };
            let sol = ne.solve(&asm.penalties, &lambdas)?;
            let sigma = (sol.rss / n as f64).sqrt();
            let loglik = gaussian_loglik(sol.rss, n);
            let family_params = FamilyParams::Gaussian { sigma };
            Ok(FittedModel {
                version: MODEL_FORMAT_VERSION,
                spec: spec.clone(),
                aic: aic_value(loglik, sol.edf, family_params.count()),
                plan: asm.plan,
                coefficients: sol.beta.iter().copied().collect(),
                lambdas,
                family_params,
                edf: sol.edf,
                loglik,
                n_obs: n,
            })
        }
        fam => {
            if fam == Family::Ocat {
                if let Some(bad) = asm.y.iter().find(|v| **v < 0.0 || **v >= opts.ocat_categories as f64 || v.fract() != 0.0) {
                    return Err(Error::Parameter(format!("ocat response {bad} is not a category index")));
                }
            }
            let lf = lik_family(fam, opts);
            let intercept = asm.plan.intercept;
            // Continuous families are fitted to the standardized response;
            // the objective is equivalent, with lambda scaled by scale^2.
            let (shift, scale) = match fam {
                Family::Ocat => (0.0, 1.0),
                _ => response_scaling(&asm.y, intercept),
            };
            let mut asm = asm;
            asm.y.iter_mut().for_each(|v| *v = (*v - shift) / scale);
            let lambda_scale = scale * scale;
            let mut warm: Option<(DVector<f64>, Vec<f64>)> = None;
            let mut best: Option<(f64, Vec<f64>, LikFit)> = None;
            let lambdas = match &opts.lambdas {
                Some(l) => l.iter().map(|v| v * lambda_scale).collect(),
                None => pls::local_search(&likelihood_start(&asm, opts, lambda_scale), LIK_SEARCH_SWEEPS, |l| {
                    let w = warm.as_ref().map(|(b, t)| (b, t.as_slice()));
                    match fit_likelihood(lf, &asm.x, &asm.y, &asm.penalties, l, w, intercept, &opts.bfgs) {
                        Ok(f) => {
                            let score = -2.0 * f.loglik + 2.0 * f.edf;
                            warm = Some((f.beta.clone(), f.theta.clone()));
                            if best.as_ref().map_or(true, |b| score < b.0) {
                                best = Some((score, l.to_vec(), f));
                            }
                            score
                        }
                        Err(e) => {
                            log::debug!("fit failed at lambdas {l:?}: {e}");
                            f64::INFINITY
                        }
                    }
                }),
            };
            let fit = match best {
                Some((_, l, f)) if l == lambdas => f,
                _ => {
                    let w = warm.as_ref().map(|(b, t)| (b, t.as_slice()));
                    fit_likelihood(lf, &asm.x, &asm.y, &asm.penalties, &lambdas, w, intercept, &opts.bfgs)?
                }
            };
            let mut coefficients: Vec<f64> = fit.beta.iter().map(|b| b * scale).collect();
            if intercept && !coefficients.is_empty() {
                coefficients[0] += shift;
            }
            let loglik = fit.loglik - n as f64 * scale.ln();
            let family_params = match fam {
                Family::ScaledT => FamilyParams::ScaledT {
                    scale: fit.theta[0].exp() * scale,
                    dof: 2.0 + fit.theta[1].exp(),
                },
                Family::Gev => FamilyParams::Gev {
                    scale: fit.theta[0].exp() * scale,
                    shape: fit.theta[1],
                },
                _ => FamilyParams::Ocat {
                    cut_points: family::ocat_cuts(&fit.theta),
                },
            };
            Ok(FittedModel {
                version: MODEL_FORMAT_VERSION,
                spec: spec.clone(),
                aic: aic_value(loglik, fit.edf, family_params.count()),
                plan: asm.plan,
                coefficients,
                lambdas: lambdas.iter().map(|l| l / lambda_scale).collect(),
                family_params,
                edf: fit.edf,
                loglik,
                n_obs: n,
            })
        }
    }
}

pub fn fit(spec: &ModelSpec, frame: &Frame, opts: &FitOptions) -> Result<FittedModel> {
    let asm = assemble(spec, frame)?;
    fit_assembled(spec, asm, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Location (point forecast) for continuous families; linear predictor
    /// for ocat.
    pub location: Vec<f64>,
    /// Category probabilities per row (ocat only).
    pub probabilities: Option<Vec<Vec<f64>>>,
    /// Modal category per row (ocat only).
    pub category: Option<Vec<usize>>,
    /// Basis evaluations clamped to the training knot range.
    pub clamped: usize,
}

impl FittedModel {
    pub fn beta(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.coefficients)
    }

    pub fn predict(&self, frame: &Frame) -> Result<Prediction> {
        let (x, clamped) = self.plan.design(frame)?;
        if clamped > 0 {
            log::debug!("{clamped} covariate values clamped to the training knot range");
        }
        let location: Vec<f64> = (x * self.beta()).iter().copied().collect();
        let (probabilities, category) = match &self.family_params {
            FamilyParams::Ocat { cut_points } => {
                let probs: Vec<Vec<f64>> = location
                    .iter()
                    .map(|&m| family::ocat_probabilities(m, cut_points))
                    .collect();
                let modal = probs
                    .iter()
                    .map(|p| {
                        p.iter()
                            .enumerate()
                            .fold((0, f64::NEG_INFINITY), |b, (k, &v)| if v > b.1 { (k, v) } else { b })
                            .0
                    })
                    .collect();
                (Some(probs), Some(modal))
            }
            _ => (None, None),
        };
        Ok(Prediction {
            location,
            probabilities,
            category,
            clamped,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// AIC of a fitted model evaluated on `frame` (normally its training data).
pub fn aic(fit: &FittedModel, frame: &Frame) -> Result<f64> {
    let y = frame.response(fit.spec.response)?;
    let pred = fit.predict(frame)?;
    let loglik = match &fit.family_params {
        FamilyParams::Gaussian { .. } => {
            let rss: f64 = y.iter().zip(&pred.location).map(|(a, b)| (a - b).powi(2)).sum();
            gaussian_loglik(rss, y.len())
        }
        other => {
            let lf = match other {
                FamilyParams::ScaledT { .. } => LikFamily::ScaledT,
                FamilyParams::Gev { .. } => LikFamily::Gev,
                FamilyParams::Ocat { cut_points } => LikFamily::Ocat {
                    categories: cut_points.len() + 1,
                },
                FamilyParams::Gaussian { .. } => unreachable!(),
            };
            let theta = other.theta();
            let mut scratch = vec![0.0; theta.len()];
            let mut total = 0.0;
            for (yi, mu) in y.iter().zip(&pred.location) {
                total += lf
                    .obs(*yi, *mu, &theta, &mut scratch)
                    .ok_or_else(|| Error::Parameter("observation outside the fitted support".into()))?
                    .loglik;
            }
            total
        }
    };
    Ok(aic_value(loglik, fit.edf, fit.family_params.count()))
}
