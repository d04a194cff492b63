//! Per-observation log-likelihoods for the non-Gaussian families.
//!
//! Each family is a location model: the linear predictor gives the location
//! `mu_i` and a small global parameter vector `theta` holds scale, shape or
//! cut points. All parameters are unconstrained on the optimizer side.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma, ln_gamma};

/// Shape values closer to zero than this use the Gumbel limit.
pub const GUMBEL_THRESHOLD: f64 = 1e-6;
/// Weak ridge on log cut-point increments of the ordered-categorical model;
/// keeps increments of categories never observed in training finite.
pub const OCAT_INCREMENT_RIDGE: f64 = 1e-2;

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logistic_density(x: f64) -> f64 {
    let p = logistic(x);
    p * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LikFamily {
    /// theta = [log sigma, log(dof - 2)]
    ScaledT,
    /// theta = [log sigma, xi]
    Gev,
    /// theta = [c_0, log(c_1 - c_0), ..., log(c_{T-2} - c_{T-3})]
    Ocat { categories: usize },
}

/// Value and derivatives of one observation's log-likelihood.
#[derive(Debug, Clone)]
pub struct ObsTerm {
    pub loglik: f64,
    pub d_mu: f64,
}

impl LikFamily {
    pub fn n_theta(&self) -> usize {
        match self {
            LikFamily::ScaledT | LikFamily::Gev => 2,
            LikFamily::Ocat { categories } => categories - 1,
        }
    }

    /// Log-likelihood of `y` at location `mu`; adds `d loglik / d theta`
    /// into `grad_theta`. `None` when `y` is outside the support.
    pub fn obs(&self, y: f64, mu: f64, theta: &[f64], grad_theta: &mut [f64]) -> Option<ObsTerm> {
        match self {
            LikFamily::ScaledT => scaled_t_obs(y, mu, theta, grad_theta),
            LikFamily::Gev => gev_obs(y, mu, theta, grad_theta),
            LikFamily::Ocat { .. } => ocat_obs(y as usize, mu, theta, grad_theta),
        }
    }

    /// Expected information `E[-d^2 loglik / d mu^2]` at `mu`.
    pub fn mu_information(&self, mu: f64, theta: &[f64]) -> f64 {
        match self {
            LikFamily::ScaledT => {
                let sigma = theta[0].exp();
                let nu = 2.0 + theta[1].exp();
                (nu + 1.0) / ((nu + 3.0) * sigma * sigma)
            }
            LikFamily::Gev => {
                let sigma = theta[0].exp();
                let xi = theta[1];
                if xi.abs() < GUMBEL_THRESHOLD {
                    1.0 / (sigma * sigma)
                } else if xi > -0.5 {
                    (1.0 + xi).powi(2) * gamma(1.0 + 2.0 * xi) / (sigma * sigma)
                } else {
                    1.0 / (sigma * sigma)
                }
            }
            LikFamily::Ocat { categories } => {
                let cuts = ocat_cuts(theta);
                let mut info = 0.0;
                for k in 0..*categories {
                    let (p, fa, fb) = ocat_cell(k, mu, &cuts);
                    if p > 1e-300 {
                        info += (fa - fb).powi(2) / p;
                    }
                }
                info
            }
        }
    }

    /// Penalty on `theta` added to the negative log-likelihood, with gradient.
    pub fn theta_penalty(&self, theta: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            LikFamily::Ocat { .. } => {
                let mut pen = 0.0;
                for j in 1..theta.len() {
                    pen += 0.5 * OCAT_INCREMENT_RIDGE * theta[j] * theta[j];
                    grad[j] += OCAT_INCREMENT_RIDGE * theta[j];
                }
                pen
            }
            _ => 0.0,
        }
    }
}

pub fn scaled_t_log_density(y: f64, mu: f64, sigma: f64, nu: f64) -> f64 {
    let z = (y - mu) / sigma;
    ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln() - sigma.ln()
        - (nu + 1.0) / 2.0 * (1.0 + z * z / nu).ln()
}

fn scaled_t_obs(y: f64, mu: f64, theta: &[f64], grad: &mut [f64]) -> Option<ObsTerm> {
    let sigma = theta[0].exp();
    let e = theta[1].exp();
    let nu = 2.0 + e;
    let z = (y - mu) / sigma;
    let q = nu + z * z;
    let loglik = scaled_t_log_density(y, mu, sigma, nu);
    let d_mu = (nu + 1.0) * z / (sigma * q);
    grad[0] += -1.0 + (nu + 1.0) * z * z / q;
    let d_nu = 0.5 * digamma((nu + 1.0) / 2.0) - 0.5 * digamma(nu / 2.0) - 0.5 / nu
        - 0.5 * (1.0 + z * z / nu).ln()
        + (nu + 1.0) / 2.0 * z * z / (nu * q);
    grad[1] += d_nu * e;
    Some(ObsTerm { loglik, d_mu })
}

/// GEV log-density; the Gumbel form `-log sigma - z - exp(-z)` is used when
/// `|xi| < GUMBEL_THRESHOLD`. `None` outside the support.
pub fn gev_log_density(y: f64, mu: f64, sigma: f64, xi: f64) -> Option<f64> {
    let z = (y - mu) / sigma;
    if xi.abs() < GUMBEL_THRESHOLD {
        return Some(-sigma.ln() - z - (-z).exp());
    }
    let t = 1.0 + xi * z;
    if t <= 0.0 {
        return None;
    }
    let l = t.ln();
    Some(-sigma.ln() - (1.0 + 1.0 / xi) * l - (-l / xi).exp())
}

fn gev_obs(y: f64, mu: f64, theta: &[f64], grad: &mut [f64]) -> Option<ObsTerm> {
    let sigma = theta[0].exp();
    let xi = theta[1];
    let z = (y - mu) / sigma;
    if xi.abs() < GUMBEL_THRESHOLD {
        let ez = (-z).exp();
        grad[0] += -1.0 + z - z * ez;
        grad[1] += -z + 0.5 * z * z - 0.5 * z * z * ez;
        return Some(ObsTerm {
            loglik: -sigma.ln() - z - ez,
            d_mu: (1.0 - ez) / sigma,
        });
    }
    let t = 1.0 + xi * z;
    if t <= 0.0 {
        return None;
    }
    let l = t.ln();
    let tp = (-l / xi).exp();
    let loglik = -sigma.ln() - (1.0 + 1.0 / xi) * l - tp;
    // d loglik / d t
    let dt = -(1.0 + 1.0 / xi) / t + tp / (xi * t);
    let d_mu = dt * (-xi / sigma);
    grad[0] += -1.0 + dt * (-xi * z);
    grad[1] += l / (xi * xi) - (1.0 + 1.0 / xi) * z / t - tp * (l / (xi * xi) - z / (xi * t));
    Some(ObsTerm { loglik, d_mu })
}

/// Increasing cut points from the unconstrained parameterization.
pub fn ocat_cuts(theta: &[f64]) -> Vec<f64> {
    let mut cuts = Vec::with_capacity(theta.len());
    let mut c = theta[0];
    cuts.push(c);
    for d in &theta[1..] {
        c += d.exp();
        cuts.push(c);
    }
    cuts
}

/// Inverse of [`ocat_cuts`]; increments are floored to stay representable.
pub fn ocat_theta(cuts: &[f64]) -> Vec<f64> {
    let mut theta = vec![cuts[0]];
    for w in cuts.windows(2) {
        theta.push((w[1] - w[0]).max(1e-8).ln());
    }
    theta
}

/// Probability of category `k` and the logistic densities at its upper and
/// lower cut (zero at the open ends).
fn ocat_cell(k: usize, mu: f64, cuts: &[f64]) -> (f64, f64, f64) {
    let t = cuts.len() + 1;
    let upper = (k + 1 < t).then(|| cuts[k] - mu);
    let lower = (k > 0).then(|| cuts[k - 1] - mu);
    let p = match (upper, lower) {
        (Some(a), Some(b)) => {
            if b > 0.0 {
                logistic(-b) - logistic(-a)
            } else {
                logistic(a) - logistic(b)
            }
        }
        (Some(a), None) => logistic(a),
        (None, Some(b)) => logistic(-b),
        (None, None) => 1.0,
    };
    (
        p.max(0.0),
        upper.map_or(0.0, logistic_density),
        lower.map_or(0.0, logistic_density),
    )
}

/// Category probabilities `P(y = k) = F(c_k - mu) - F(c_{k-1} - mu)`.
pub fn ocat_probabilities(mu: f64, cuts: &[f64]) -> Vec<f64> {
    (0..=cuts.len()).map(|k| ocat_cell(k, mu, cuts).0).collect()
}

fn ocat_obs(y: usize, mu: f64, theta: &[f64], grad: &mut [f64]) -> Option<ObsTerm> {
    let cuts = ocat_cuts(theta);
    if y > cuts.len() {
        return None;
    }
    let (p, fa, fb) = ocat_cell(y, mu, &cuts);
    let p = p.max(1e-300);
    // d loglik / d c_j, non-zero only at the two cuts bounding category y
    let mut dc = |j: usize, v: f64| {
        grad[0] += v;
        for m in 1..=j {
            grad[m] += v * theta[m].exp();
        }
    };
    if y < cuts.len() {
        dc(y, fa / p);
    }
    if y > 0 {
        dc(y - 1, -fb / p);
    }
    Some(ObsTerm {
        loglik: p.ln(),
        d_mu: -(fa - fb) / p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gumbel_limit_matches_closed_form() {
        for &(y, mu, sigma) in &[(3.0, 1.0, 2.0), (-1.0, 0.5, 0.7), (10.0, 2.0, 3.0)] {
            let z: f64 = (y - mu) / sigma;
            let gumbel = -f64::ln(sigma) - z - (-z).exp();
            assert!((gev_log_density(y, mu, sigma, 0.0).unwrap() - gumbel).abs() < 1e-12);
            // just outside the threshold the general branch agrees to O(xi)
            let near = gev_log_density(y, mu, sigma, 2e-6).unwrap();
            assert!((near - gumbel).abs() < 1e-4);
        }
    }

    #[test]
    fn gev_support_violation() {
        // xi > 0: lower bound at mu - sigma / xi
        assert!(gev_log_density(-10.0, 0.0, 1.0, 0.5).is_none());
        assert!(gev_log_density(-1.0, 0.0, 1.0, 0.5).is_some());
    }

    #[test]
    fn ocat_probabilities_sum_to_one() {
        let cuts = ocat_cuts(&[-2.0, 0.1, -0.5, 0.3, -1.0]);
        for mu in [-5.0, -1.0, 0.0, 0.7, 3.0, 40.0] {
            let p = ocat_probabilities(mu, &cuts);
            assert_eq!(p.len(), 6);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|v| *v >= 0.0));
        }
        assert!(cuts.windows(2).all(|w| w[1] > w[0]));
        let back = ocat_theta(&cuts);
        for (a, b) in back.iter().zip(&[-2.0, 0.1, -0.5, 0.3, -1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
