//! Joint log density of the binomial-normal hierarchical model.
//!
//! The model is written in the non-centred form
//!
//! ```text
//! logit p_ctrl,i = mu_i - theta / 2
//! logit p_trt,i  = mu_i + theta / 2 + zeta_i * tau
//! zeta_i ~ N(0, 1)
//! ```
//!
//! so that the study-level log odds ratio `theta + zeta_i * tau` is
//! `N(theta, tau^2)`. The heterogeneity `tau` is sampled on the log scale;
//! [`log_prior`] includes the Jacobian of that change of variables.
//!
//! Unconstrained vectors use the flat layout
//! `[mu_1..mu_k, theta, zeta_1..zeta_k, log_tau]` (length `2k + 2`).

use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::math::{binomial_logpmf_logit, logistic};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Unconstrained model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    pub mu: Vec<f64>,
    pub theta: f64,
    pub zeta: Vec<f64>,
    pub log_tau: f64,
}

/// Model state on the natural scale (`tau > 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedParameters {
    pub mu: Vec<f64>,
    pub theta: f64,
    pub zeta: Vec<f64>,
    pub tau: f64,
}

impl ParameterVector {
    pub fn new(mu: Vec<f64>, theta: f64, zeta: Vec<f64>, log_tau: f64) -> Result<Self> {
        if mu.len() != zeta.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                actual: zeta.len(),
            });
        }
        Ok(Self {
            mu,
            theta,
            zeta,
            log_tau,
        })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            mu: vec![0.0; k],
            theta: 0.0,
            zeta: vec![0.0; k],
            log_tau: 0.0,
        }
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    pub fn tau(&self) -> f64 {
        self.log_tau.exp()
    }

    pub fn dim(&self) -> usize {
        2 * self.k() + 2
    }

    pub fn to_unconstrained(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.mu);
        v.push(self.theta);
        v.extend_from_slice(&self.zeta);
        v.push(self.log_tau);
        v
    }

    pub fn from_unconstrained(k: usize, x: &[f64]) -> Result<Self> {
        if x.len() != 2 * k + 2 {
            return Err(Error::DimensionMismatch {
                expected: 2 * k + 2,
                actual: x.len(),
            });
        }
        Ok(Self {
            mu: x[..k].to_vec(),
            theta: x[k],
            zeta: x[k + 1..2 * k + 1].to_vec(),
            log_tau: x[2 * k + 1],
        })
    }

    pub fn constrain(&self) -> ConstrainedParameters {
        ConstrainedParameters {
            mu: self.mu.clone(),
            theta: self.theta,
            zeta: self.zeta.clone(),
            tau: self.tau(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.theta.is_finite()
            && self.log_tau.is_finite()
            && self.mu.iter().chain(&self.zeta).all(|v| v.is_finite())
    }
}

impl ConstrainedParameters {
    pub fn unconstrain(&self) -> Result<ParameterVector> {
        if !(self.tau > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be > 0 to unconstrain, got {}",
                self.tau
            )));
        }
        ParameterVector::new(
            self.mu.clone(),
            self.theta,
            self.zeta.clone(),
            self.tau.ln(),
        )
    }
}

/// Mean and standard deviation of a normal prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub sd: f64,
}

impl NormalPrior {
    pub fn new(mean: f64, sd: f64) -> Self {
        Self { mean, sd }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        let z = (x - self.mean) / self.sd;
        -HALF_LN_2PI - self.sd.ln() - 0.5 * z * z
    }

    fn grad(&self, x: f64) -> f64 {
        -(x - self.mean) / (self.sd * self.sd)
    }
}

/// Family of the heterogeneity prior; all are supported on `tau >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauPrior {
    HalfNormal,
    Uniform,
    HalfCauchy,
}

impl std::str::FromStr for TauPrior {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half-normal" => Ok(Self::HalfNormal),
            "uniform" => Ok(Self::Uniform),
            "half-cauchy" => Ok(Self::HalfCauchy),
            other => Err(Error::InvalidPrior(format!(
                "unknown tau prior `{other}` (expected half-normal, uniform or half-cauchy)"
            ))),
        }
    }
}

impl TauPrior {
    /// Log density at `tau` for scale `scale`; `-inf` outside the support.
    pub fn log_density(self, tau: f64, scale: f64) -> f64 {
        if tau < 0.0 {
            return f64::NEG_INFINITY;
        }
        match self {
            Self::HalfNormal => {
                let z = tau / scale;
                LN_2 - HALF_LN_2PI - scale.ln() - 0.5 * z * z
            }
            Self::Uniform => {
                if tau <= scale {
                    -scale.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            Self::HalfCauchy => {
                let z = tau / scale;
                LN_2 - (PI * scale).ln() - z.mul_add(z, 1.0).ln()
            }
        }
    }

    /// `tau * d/dtau log p(tau)`: the chain-rule factor for `log tau`.
    fn dlog_dlog_tau(self, tau: f64, scale: f64) -> f64 {
        match self {
            Self::HalfNormal => -(tau * tau) / (scale * scale),
            Self::Uniform => 0.0,
            Self::HalfCauchy => -2.0 * tau * tau / (scale * scale + tau * tau),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub mu_prior: NormalPrior,
    pub theta_prior: NormalPrior,
    pub tau_prior_dist: TauPrior,
    pub tau_prior_scale: f64,
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidPrior(format!("{name} must be > 0, got {v}")))
            }
        };
        check("mu prior sd", self.mu_prior.sd)?;
        check("theta prior sd", self.theta_prior.sd)?;
        check("tau prior scale", self.tau_prior_scale)?;
        if !self.mu_prior.mean.is_finite() || !self.theta_prior.mean.is_finite() {
            return Err(Error::InvalidPrior("prior means must be finite".into()));
        }
        Ok(())
    }
}

fn check_dims(data: &MetaDataset, p: &ParameterVector) -> Result<()> {
    if p.mu.len() != data.len() || p.zeta.len() != data.len() {
        return Err(Error::DimensionMismatch {
            expected: data.len(),
            actual: p.mu.len().max(p.zeta.len()),
        });
    }
    Ok(())
}

/// Linear predictors `(eta_ctrl, eta_trt)` for study `i`.
#[inline]
fn predictors(mu: f64, theta: f64, zeta: f64, tau: f64) -> (f64, f64) {
    (mu - 0.5 * theta, mu + 0.5 * theta + zeta * tau)
}

/// Event probabilities `(p_ctrl, p_trt)` of study `study_index`.
pub fn arm_probabilities(p: &ParameterVector, study_index: usize) -> Result<(f64, f64)> {
    if study_index >= p.k() {
        return Err(Error::IndexOutOfRange {
            index: study_index,
            len: p.k(),
        });
    }
    let (ec, et) = predictors(
        p.mu[study_index],
        p.theta,
        p.zeta[study_index],
        p.tau(),
    );
    Ok((logistic(ec), logistic(et)))
}

/// Binomial log-likelihood summed over studies and arms, including the
/// binomial coefficients.
pub fn log_likelihood(data: &MetaDataset, p: &ParameterVector) -> Result<f64> {
    check_dims(data, p)?;
    let tau = p.tau();
    Ok(data
        .studies()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (ec, et) = predictors(p.mu[i], p.theta, p.zeta[i], tau);
            binomial_logpmf_logit(s.control.events(), s.control.total(), ec)
                + binomial_logpmf_logit(s.experimental.events(), s.experimental.total(), et)
        })
        .sum())
}

/// Prior log density on the unconstrained scale (includes `log tau` Jacobian).
pub fn log_prior(p: &ParameterVector, cfg: &PriorConfig) -> f64 {
    let mu: f64 = p.mu.iter().map(|&m| cfg.mu_prior.log_density(m)).sum();
    let zeta: f64 = p.zeta.iter().map(|&z| -HALF_LN_2PI - 0.5 * z * z).sum();
    let theta = cfg.theta_prior.log_density(p.theta);
    let tau = cfg
        .tau_prior_dist
        .log_density(p.tau(), cfg.tau_prior_scale);
    mu + theta + zeta + tau + p.log_tau
}

pub fn log_posterior(data: &MetaDataset, p: &ParameterVector, cfg: &PriorConfig) -> Result<f64> {
    Ok(log_likelihood(data, p)? + log_prior(p, cfg))
}

/// Analytic gradient of [`log_posterior`] in the flat unconstrained layout.
pub fn gradient(data: &MetaDataset, p: &ParameterVector, cfg: &PriorConfig) -> Result<Vec<f64>> {
    check_dims(data, p)?;
    let mut grad = vec![0.0; p.dim()];
    posterior_value_and_gradient(data, cfg, &p.to_unconstrained(), &mut grad);
    Ok(grad)
}

/// Log posterior and gradient written into `grad`, on a flat vector whose
/// length is assumed to be `2k + 2`.
fn posterior_value_and_gradient(
    data: &MetaDataset,
    cfg: &PriorConfig,
    x: &[f64],
    grad: &mut [f64],
) -> f64 {
    let k = data.len();
    let theta = x[k];
    let log_tau = x[2 * k + 1];
    let tau = log_tau.exp();
    let mut lp = 0.0;
    let mut g_theta = 0.0;
    let mut g_log_tau = 0.0;
    for (i, s) in data.studies().iter().enumerate() {
        let mu = x[i];
        let zeta = x[k + 1 + i];
        let (ec, et) = predictors(mu, theta, zeta, tau);
        let (rc, nc) = (s.control.events(), s.control.total());
        let (rt, nt) = (s.experimental.events(), s.experimental.total());
        lp += binomial_logpmf_logit(rc, nc, ec) + binomial_logpmf_logit(rt, nt, et);
        // d/d eta [r log p + (n - r) log(1 - p)] = r - n p
        let resid_c = rc as f64 - nc as f64 * logistic(ec);
        let resid_t = rt as f64 - nt as f64 * logistic(et);

        lp += cfg.mu_prior.log_density(mu) - HALF_LN_2PI - 0.5 * zeta * zeta;
        grad[i] = resid_c + resid_t + cfg.mu_prior.grad(mu);
        grad[k + 1 + i] = resid_t * tau - zeta;
        g_theta += 0.5 * (resid_t - resid_c);
        g_log_tau += resid_t * zeta * tau;
    }
    lp += cfg.theta_prior.log_density(theta);
    lp += cfg.tau_prior_dist.log_density(tau, cfg.tau_prior_scale) + log_tau;
    grad[k] = g_theta + cfg.theta_prior.grad(theta);
    grad[2 * k + 1] =
        g_log_tau + cfg.tau_prior_dist.dlog_dlog_tau(tau, cfg.tau_prior_scale) + 1.0;
    lp
}

/// A differentiable log density over a flat unconstrained vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Returns the log density at `x` and writes its gradient into `grad`.
    /// Impossible states return `-inf`.
    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64;
}

/// The full posterior of a dataset under a prior configuration.
#[derive(Debug, Clone)]
pub struct Posterior<'a> {
    data: &'a MetaDataset,
    priors: PriorConfig,
}

impl<'a> Posterior<'a> {
    pub fn new(data: &'a MetaDataset, priors: PriorConfig) -> Result<Self> {
        priors.validate()?;
        Ok(Self { data, priors })
    }

    pub fn data(&self) -> &MetaDataset {
        self.data
    }

    pub fn priors(&self) -> &PriorConfig {
        &self.priors
    }
}

impl LogDensity for Posterior<'_> {
    fn dim(&self) -> usize {
        2 * self.data.len() + 2
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        posterior_value_and_gradient(self.data, &self.priors, x, grad)
    }
}

/// The prior alone over the same parameter layout; used to check that the
/// sampler recovers known marginals.
#[derive(Debug, Clone)]
pub struct PriorTarget {
    k: usize,
    priors: PriorConfig,
}

impl PriorTarget {
    pub fn new(k: usize, priors: PriorConfig) -> Result<Self> {
        priors.validate()?;
        Ok(Self { k, priors })
    }
}

impl LogDensity for PriorTarget {
    fn dim(&self) -> usize {
        2 * self.k + 2
    }

    fn log_density_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let k = self.k;
        let cfg = &self.priors;
        let p = ParameterVector::from_unconstrained(k, x).expect("dimension checked by caller");
        for i in 0..k {
            grad[i] = cfg.mu_prior.grad(x[i]);
            grad[k + 1 + i] = -x[k + 1 + i];
        }
        grad[k] = cfg.theta_prior.grad(x[k]);
        let tau = p.tau();
        grad[2 * k + 1] = cfg.tau_prior_dist.dlog_dlog_tau(tau, cfg.tau_prior_scale) + 1.0;
        log_prior(&p, cfg)
    }
}
