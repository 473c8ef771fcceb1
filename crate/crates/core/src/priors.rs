//! Weakly informative priors for the mean log odds ratio.
//!
//! A symmetric normal prior `N(0, sigma^2)` on `theta` puts 95% of its mass
//! on odds ratios in `(1/delta, delta)` when `sigma = log(delta) / 1.96`.
//! Reading the prior variance as the squared standard error of a log odds
//! ratio from a balanced 2x2 table with `N / 4` patients per cell gives the
//! implied effective sample size `N = 16 / sigma^2`.

use crate::error::{Error, Result};
use crate::model::{NormalPrior, PriorConfig, TauPrior};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Default odds-ratio bound.
pub const DEFAULT_DELTA: f64 = 250.0;
/// Standard deviation of the vague comparator prior for `theta`.
pub const VAGUE_THETA_SD: f64 = 100.0;
/// Theta prior sd used by the default configuration (`wip_sigma(250)` to two decimals).
pub const DEFAULT_THETA_SD: f64 = 2.82;
pub const DEFAULT_MU_SD: f64 = 10.0;
pub const DEFAULT_TAU_SCALE: f64 = 0.5;

const Z_975: f64 = 1.96;

/// Prior standard deviation placing 95% mass on odds ratios in `(1/delta, delta)`.
pub fn wip_sigma(delta: f64) -> Result<f64> {
    if !(delta > 1.0) || !delta.is_finite() {
        return Err(Error::InvalidBound(delta));
    }
    Ok(delta.ln() / Z_975)
}

/// Prior effective sample size `16 / sigma^2`.
pub fn unit_information_ess(sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidPrior(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(16.0 / (sigma * sigma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WipDerivation {
    pub delta: f64,
    pub sigma_prior: f64,
    pub effective_sample_size: f64,
}

impl WipDerivation {
    pub fn from_delta(delta: f64) -> Result<Self> {
        let sigma_prior = wip_sigma(delta)?;
        Ok(Self {
            delta,
            sigma_prior,
            effective_sample_size: unit_information_ess(sigma_prior)?,
        })
    }

    pub fn theta_prior(&self) -> NormalPrior {
        NormalPrior::new(0.0, self.sigma_prior)
    }
}

/// `mu ~ N(0, 10)`, `theta ~ N(0, 2.82)`, `tau ~ HN(0.5)`.
pub fn default_priors() -> PriorConfig {
    PriorConfig {
        mu_prior: NormalPrior::new(0.0, DEFAULT_MU_SD),
        theta_prior: NormalPrior::new(0.0, DEFAULT_THETA_SD),
        tau_prior_dist: TauPrior::HalfNormal,
        tau_prior_scale: DEFAULT_TAU_SCALE,
    }
}

/// The default configuration with the vague `N(0, 100)` prior on `theta`.
pub fn vague_priors() -> PriorConfig {
    PriorConfig {
        theta_prior: NormalPrior::new(0.0, VAGUE_THETA_SD),
        ..default_priors()
    }
}

/// Quantile function of the half-normal distribution with scale `scale`.
pub fn half_normal_quantile(scale: f64, p: f64) -> f64 {
    let std = Normal::standard();
    scale * std.inverse_cdf(0.5 * (1.0 + p))
}
