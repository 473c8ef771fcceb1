//! Effect summaries: medians and highest-density intervals of posterior
//! draws, Wald intervals of the likelihood fit, and per-study observed log
//! odds ratios for forest tables.

use crate::data::{MetaDataset, StudyArm};
use crate::error::{Error, Result};
use crate::math::median;
use crate::mle::MleResult;
use crate::model::PriorConfig;
use crate::priors::{default_priors, vague_priors};
use crate::sampler::PosteriorDraws;
use serde::{Deserialize, Serialize};

const Z_975: f64 = 1.96;
pub const DEFAULT_MASS: f64 = 0.95;

/// Estimation method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wip,
    Vague,
    Mle,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Wip, Method::Vague, Method::Mle];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Wip => "wip",
            Method::Vague => "vague",
            Method::Mle => "mle",
        }
    }

    pub fn is_bayesian(self) -> bool {
        !matches!(self, Method::Mle)
    }

    /// Default priors of a Bayesian method.
    pub fn priors(self) -> Option<PriorConfig> {
        match self {
            Method::Wip => Some(default_priors()),
            Method::Vague => Some(vague_priors()),
            Method::Mle => None,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wip" => Ok(Method::Wip),
            "vague" => Ok(Method::Vague),
            "mle" => Ok(Method::Mle),
            other => Err(Error::InvalidConfig(format!(
                "unknown method `{other}` (expected wip, vague or mle)"
            ))),
        }
    }
}

/// Narrowest interval holding `ceil(mass * n)` of the sorted samples; ties
/// go to the lowest starting index.
pub fn hdi(samples: &[f64], mass: f64) -> Result<(f64, f64)> {
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::InvalidConfig(format!("mass must be in (0, 1), got {mass}")));
    }
    let needed = (1.0 / (1.0 - mass) - 1e-9).ceil() as usize;
    let n = samples.len();
    if n < needed {
        return Err(Error::TooFewSamples { needed, got: n });
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::InvalidConfig("samples contain NaN".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = ((mass * n as f64) - 1e-9).ceil().max(1.0) as usize;
    let mut best = 0;
    let mut best_width = f64::INFINITY;
    for start in 0..=n - m {
        let width = sorted[start + m - 1] - sorted[start];
        if width < best_width {
            best_width = width;
            best = start;
        }
    }
    Ok((sorted[best], sorted[best + m - 1]))
}

/// Observed log odds ratio of one study with its 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestRow {
    pub study: String,
    pub log_or: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub correction_applied: bool,
}

/// Log odds ratio (experimental vs control) and the 2x2 standard error,
/// adding 0.5 to every cell when any cell is zero.
pub fn observed_log_or(control: &StudyArm, experimental: &StudyArm) -> (f64, f64, bool) {
    let cells = [
        experimental.events(),
        experimental.non_events(),
        control.events(),
        control.non_events(),
    ];
    let correction_applied = cells.contains(&0);
    let shift = if correction_applied { 0.5 } else { 0.0 };
    let [a, b, c, d] = cells.map(|x| x as f64 + shift);
    let log_or = (a.ln() + d.ln()) - (b.ln() + c.ln());
    let se = ((1.0 / a + 1.0 / b) + (1.0 / c + 1.0 / d)).sqrt();
    (log_or, se, correction_applied)
}

pub fn forest_rows(data: &MetaDataset) -> Vec<ForestRow> {
    data.studies()
        .iter()
        .map(|s| {
            let (log_or, se, correction_applied) = observed_log_or(&s.control, &s.experimental);
            ForestRow {
                study: s.label.clone(),
                log_or,
                ci_low: log_or - Z_975 * se,
                ci_high: log_or + Z_975 * se,
                correction_applied,
            }
        })
        .collect()
}

/// Point and interval estimate of the mean effect on both scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub method: Method,
    pub point_log_or: f64,
    pub interval_log_or: (f64, f64),
    pub point_or: f64,
    pub interval_or: (f64, f64),
    pub tau_hat: f64,
}

impl EffectSummary {
    pub fn new(method: Method, point: f64, interval: (f64, f64), tau_hat: f64) -> Self {
        Self {
            method,
            point_log_or: point,
            interval_log_or: interval,
            point_or: point.exp(),
            interval_or: (interval.0.exp(), interval.1.exp()),
            tau_hat,
        }
    }
}

/// Fit output accepted by [`summarize_fit`].
#[derive(Debug, Clone, Copy)]
pub enum FitOutput<'a> {
    Draws(&'a PosteriorDraws),
    Mle(&'a MleResult),
}

/// Median and 95% HDI of `theta` draws with the median of `tau` draws.
pub fn summarize_draws(method: Method, theta: &[f64], tau: &[f64]) -> Result<EffectSummary> {
    if theta.is_empty() || tau.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let interval = hdi(theta, DEFAULT_MASS)?;
    Ok(EffectSummary::new(method, median(theta), interval, median(tau)))
}

pub fn summarize_fit(fit: FitOutput<'_>, method: Method) -> Result<EffectSummary> {
    match fit {
        FitOutput::Draws(d) => {
            if !method.is_bayesian() {
                return Err(Error::InvalidConfig("posterior draws need a Bayesian method".into()));
            }
            summarize_draws(method, &d.theta(), &d.tau())
        }
        FitOutput::Mle(r) => {
            if method != Method::Mle {
                return Err(Error::InvalidConfig("a likelihood fit needs method mle".into()));
            }
            let ci = r.ci_95.ok_or_else(|| {
                Error::InvalidConfig(format!("likelihood fit failed: {}", r.failure_reason))
            })?;
            Ok(EffectSummary::new(Method::Mle, r.theta_hat, ci, r.tau_hat))
        }
    }
}
