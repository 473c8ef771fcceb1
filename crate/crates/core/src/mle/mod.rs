//! Maximum-likelihood fit of the hierarchical model with the study-level
//! random effects integrated out.

pub mod bfgs;
pub mod quadrature;

use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::math::{binomial_logpmf_logit, logistic};
use crate::sampler::initial_position;
use bfgs::{minimize, BfgsOptions};
use quadrature::{arm_integral, gh_nodes, GaussHermite};
use serde::{Deserialize, Serialize};

/// Quadrature order used by default.
pub const DEFAULT_ORDER: usize = 7;
/// Estimates with `|theta_hat|` beyond this are treated as separation drift.
pub const THETA_DRIFT_LIMIT: f64 = 10.0;

const Z_975: f64 = 1.96;
const TAU_STARTS: [f64; 3] = [0.0, 0.1, 0.5];
const AUDIT_STEP: f64 = 1e-3;
const AUDIT_TOL: f64 = 1e-6;
/// `tau_hat` below this is reported as a boundary estimate.
const TAU_BOUNDARY: f64 = 1e-3;
const NEAR_SINGULAR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureReason {
    None,
    OptimizerNoConvergence,
    HessianNotPositiveDefinite,
    NonFiniteSe,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::OptimizerNoConvergence => "optimizer-no-convergence",
            Self::HessianNotPositiveDefinite => "hessian-not-positive-definite",
            Self::NonFiniteSe => "non-finite-se",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub theta_hat: f64,
    pub tau_hat: f64,
    pub mu_hat: Vec<f64>,
    pub se_theta: Option<f64>,
    pub ci_95: Option<(f64, f64)>,
    pub converged: bool,
    pub failure_reason: FailureReason,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// Reliability notes that do not invalidate the fit.
    pub warnings: Vec<String>,
}

/// Marginal log likelihood of `(mu, theta, tau)` with the treatment-arm
/// random effect integrated out by adaptive Gauss-Hermite quadrature.
pub fn marginal_log_likelihood(
    data: &MetaDataset,
    mu: &[f64],
    theta: f64,
    tau: f64,
    order: usize,
) -> Result<f64> {
    if mu.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: mu.len(),
        });
    }
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be >= 0, got {tau}")));
    }
    let gh = gh_nodes(order)?;
    Ok(Objective { data, gh: &gh }.evaluate(mu, theta, tau).0)
}

struct Objective<'a> {
    data: &'a MetaDataset,
    gh: &'a GaussHermite,
}

impl Objective<'_> {
    /// Log likelihood and its gradient in `(mu, theta, tau)`.
    fn evaluate(&self, mu: &[f64], theta: f64, tau: f64) -> (f64, Vec<f64>) {
        let k = self.data.len();
        let mut grad = vec![0.0; k + 2];
        let mut ll = 0.0;
        for (i, s) in self.data.studies().iter().enumerate() {
            let (rc, nc) = (s.control.events(), s.control.total());
            let c = mu[i] - 0.5 * theta;
            let resid_c = rc as f64 - nc as f64 * logistic(c);
            let arm = arm_integral(
                s.experimental.events(),
                s.experimental.total(),
                mu[i] + 0.5 * theta,
                tau,
                self.gh,
            );
            ll += binomial_logpmf_logit(rc, nc, c) + arm.log_value;
            grad[i] = resid_c + arm.d_a;
            grad[k] += 0.5 * (arm.d_a - resid_c);
            grad[k + 1] += arm.d_tau;
        }
        (ll, grad)
    }

    /// Log likelihood on the optimizer layout `[mu.., theta, s]`, `tau = |s|`.
    fn at(&self, x: &[f64]) -> (f64, Vec<f64>) {
        let k = self.data.len();
        let s = x[k + 1];
        let (ll, mut g) = self.evaluate(&x[..k], x[k], s.abs());
        if s < 0.0 {
            g[k + 1] = -g[k + 1];
        }
        (ll, g)
    }
}

/// Maximum-likelihood fit with a structured non-convergence outcome.
pub fn fit_mle(data: &MetaDataset, order: usize) -> Result<MleResult> {
    let gh = gh_nodes(order)?;
    let obj = Objective { data, gh: &gh };
    let k = data.len();
    let init = initial_position(data);

    let neg = |x: &[f64]| {
        let (ll, g) = obj.at(x);
        (-ll, g.into_iter().map(|v| -v).collect::<Vec<_>>())
    };
    let mut best: Option<bfgs::BfgsResult> = None;
    for &tau0 in &TAU_STARTS {
        let mut x0 = init[..k].to_vec();
        x0.push(0.0);
        x0.push(tau0);
        let r = minimize(neg, &x0, BfgsOptions::default());
        if !r.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => r.value < b.value - 1e-9 || (r.value <= b.value + 1e-9 && r.converged && !b.converged),
        };
        if better {
            best = Some(r);
        }
    }

    let Some(opt) = best else {
        return Ok(MleResult {
            theta_hat: f64::NAN,
            tau_hat: f64::NAN,
            mu_hat: vec![f64::NAN; k],
            se_theta: None,
            ci_95: None,
            converged: false,
            failure_reason: FailureReason::OptimizerNoConvergence,
            log_likelihood: f64::NAN,
            iterations: 0,
            warnings: vec!["no start produced a finite likelihood".into()],
        });
    };

    let mut x = opt.x.clone();
    x[k + 1] = x[k + 1].abs();
    let theta_hat = x[k];
    let tau_hat = x[k + 1];
    let log_likelihood = -opt.value;
    let mut result = MleResult {
        theta_hat,
        tau_hat,
        mu_hat: x[..k].to_vec(),
        se_theta: None,
        ci_95: None,
        converged: false,
        failure_reason: FailureReason::None,
        log_likelihood,
        iterations: opt.iterations,
        warnings: Vec::new(),
    };

    if !opt.converged || !locally_optimal(&obj, &x, log_likelihood) {
        result.failure_reason = FailureReason::OptimizerNoConvergence;
        return Ok(result);
    }
    if theta_hat.abs() > THETA_DRIFT_LIMIT {
        result.failure_reason = FailureReason::OptimizerNoConvergence;
        result
            .warnings
            .push(format!("|theta_hat| > {THETA_DRIFT_LIMIT}: separation drift"));
        return Ok(result);
    }

    let include_tau = tau_hat > TAU_BOUNDARY;
    let info = observed_information(&obj, &x, include_tau);
    let Some(chol) = cholesky(&info) else {
        result.failure_reason = FailureReason::HessianNotPositiveDefinite;
        return Ok(result);
    };
    let max_diag = info.iter().enumerate().fold(0.0f64, |m, (i, r)| m.max(r[i]));
    let min_pivot = chol.iter().enumerate().fold(f64::INFINITY, |m, (i, r)| m.min(r[i] * r[i]));
    if min_pivot < NEAR_SINGULAR * max_diag {
        result
            .warnings
            .push("observed information is near-singular; estimates may be unreliable".into());
    }
    let mut unit = vec![0.0; info.len()];
    unit[k] = 1.0;
    let var = solve_cholesky(&chol, &unit)[k];
    let se = var.sqrt();
    if !se.is_finite() || se <= 0.0 {
        result.failure_reason = FailureReason::NonFiniteSe;
        return Ok(result);
    }
    if !include_tau {
        result
            .warnings
            .push("tau_hat on the boundary at 0".into());
    }
    result.se_theta = Some(se);
    result.ci_95 = Some((theta_hat - Z_975 * se, theta_hat + Z_975 * se));
    result.converged = true;
    Ok(result)
}

/// No single-coordinate move of `AUDIT_STEP` (keeping `tau >= 0`) raises
/// the log likelihood by more than `AUDIT_TOL`.
fn locally_optimal(obj: &Objective<'_>, x: &[f64], ll: f64) -> bool {
    let k = x.len() - 2;
    for j in 0..x.len() {
        for sign in [-1.0, 1.0] {
            let mut y = x.to_vec();
            y[j] += sign * AUDIT_STEP;
            if j == k + 1 && y[j] < 0.0 {
                continue;
            }
            let (v, _) = obj.evaluate(&y[..k], y[k], y[k + 1]);
            if v > ll + AUDIT_TOL {
                return false;
            }
        }
    }
    true
}

/// Negative Hessian of the log likelihood by central differences of the
/// analytic gradient, over `(mu, theta)` and optionally `tau`.
fn observed_information(obj: &Objective<'_>, x: &[f64], include_tau: bool) -> Vec<Vec<f64>> {
    let k = x.len() - 2;
    let m = if include_tau { k + 2 } else { k + 1 };
    let grad_at = |y: &[f64]| obj.evaluate(&y[..k], y[k], y[k + 1]).1;
    let mut h = vec![vec![0.0; m]; m];
    for j in 0..m {
        let step = 1e-5 * x[j].abs().max(1.0);
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[j] += step;
        down[j] -= step;
        let (gu, gd) = (grad_at(&up), grad_at(&down));
        for i in 0..m {
            h[i][j] = -(gu[i] - gd[i]) / (2.0 * step);
        }
    }
    for i in 0..m {
        for j in 0..i {
            let v = 0.5 * (h[i][j] + h[j][i]);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = a[i][i] - s;
                if !(d > 0.0) || !d.is_finite() {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    Some(l)
}

fn solve_cholesky(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|p| l[i][p] * y[p]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|p| l[p][i] * x[p]).sum::<f64>()) / l[i][i];
    }
    x
}
