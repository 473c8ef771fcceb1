//! Hamiltonian Monte Carlo over the unconstrained parameter vector.
//!
//! Each chain runs the No-U-Turn sampler with a diagonal metric. Warmup
//! adapts the step size by dual averaging towards `target_acceptance` and
//! estimates the metric from windowed draw variances; after each metric
//! update the step size is re-initialized by doubling/halving until a
//! single leapfrog step crosses 0.8 acceptance.
//!
//! Chains are deterministic functions of `(seed, chain_id)`: each chain owns
//! a ChaCha8 stream with key `seed` and stream number `chain_id`.

mod adapt;
pub mod diagnostics;
mod hamiltonian;
mod nuts;

pub use adapt::{metric_windows, DualAverage, DualAverageOptions, VarianceEstimator};
pub use diagnostics::{effective_sample_size, rhat};
pub use hamiltonian::{leapfrog, NonFiniteState, PhasePoint};
pub use nuts::Transition;

use crate::data::MetaDataset;
use crate::error::{Error, Result};
use crate::math::{logit, median};
use crate::model::{LogDensity, Posterior, PriorConfig};
use nuts::Nuts;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    /// Total iterations per chain, warmup included.
    pub iterations: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Dual-averaging target for the mean acceptance statistic.
    pub target_acceptance: f64,
    pub max_tree_depth: usize,
    /// A transition is divergent when `|H - H0|` exceeds this.
    pub divergence_threshold: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 2000,
            warmup: 1000,
            seed: 1,
            target_acceptance: 0.95,
            max_tree_depth: 10,
            divergence_threshold: 1000.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::InvalidConfig("chains must be >= 1".into()));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("iterations must be >= 1".into()));
        }
        if self.warmup >= self.iterations {
            return Err(Error::InvalidConfig(format!(
                "warmup < iterations violated ({} >= {})",
                self.warmup, self.iterations
            )));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidConfig(
                "target acceptance must lie in (0, 1)".into(),
            ));
        }
        if self.max_tree_depth == 0 {
            return Err(Error::InvalidConfig("max tree depth must be >= 1".into()));
        }
        if !(self.divergence_threshold > 0.0) {
            return Err(Error::InvalidConfig(
                "divergence threshold must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        self.iterations - self.warmup
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    pub chain_id: usize,
    /// Divergent post-warmup transitions.
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_size: f64,
    pub inv_mass: Vec<f64>,
    pub mean_accept_stat: f64,
    pub n_leapfrog: usize,
    pub max_tree_depth_hits: usize,
}

/// Post-warmup draws of one chain on the unconstrained scale.
#[derive(Debug, Clone)]
pub struct RawChain {
    pub draws: Vec<Vec<f64>>,
    pub energy_errors: Vec<f64>,
    pub stats: ChainStats,
}

impl RawChain {
    pub fn column(&self, index: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[index]).collect()
    }
}

fn chain_rng(seed: u64, chain_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chain_id as u64);
    rng
}

fn refresh_momentum<R: Rng>(point: &mut PhasePoint, inv_mass: &[f64], rng: &mut R) {
    for (p, m) in point.momentum.iter_mut().zip(inv_mass) {
        let z: f64 = rng.sample(StandardNormal);
        *p = z / m.sqrt();
    }
}

/// Doubles or halves `step` until one leapfrog step crosses acceptance 0.8.
fn initial_step_size<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    at: &PhasePoint,
    inv_mass: &[f64],
    mut step: f64,
    rng: &mut R,
) -> f64 {
    let log_target = 0.8f64.ln();
    let mut point = at.clone();
    let mut direction = 0i32;
    for _ in 0..100 {
        refresh_momentum(&mut point, inv_mass, rng);
        let h0 = point.energy(inv_mass);
        let delta = match leapfrog(target, &point, inv_mass, step) {
            Ok(next) => h0 - next.energy(inv_mass),
            Err(_) => f64::NEG_INFINITY,
        };
        if direction == 0 {
            direction = if delta > log_target { 1 } else { -1 };
        }
        if direction == 1 && !(delta > log_target) {
            break;
        }
        if direction == -1 && !(delta < log_target) {
            break;
        }
        step = if direction == 1 { 2.0 * step } else { 0.5 * step };
        if !(1e-12..=1e7).contains(&step) {
            break;
        }
    }
    step.clamp(1e-12, 1e7)
}

/// Runs one chain on an arbitrary target starting near `init`.
///
/// `init` receives independent `N(0, 0.1^2)` jitter per coordinate from the
/// chain's own stream before sampling starts.
pub fn run_chain_on_target<T: LogDensity + ?Sized>(
    target: &T,
    init: &[f64],
    cfg: &SamplerConfig,
    chain_id: usize,
) -> Result<RawChain> {
    cfg.validate()?;
    let dim = target.dim();
    if init.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: init.len(),
        });
    }
    let mut rng = chain_rng(cfg.seed, chain_id);
    let start: Vec<f64> = init
        .iter()
        .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut current = PhasePoint::at(target, start);
    if !current.is_finite() {
        return Err(Error::SamplerFailure {
            chain: chain_id,
            reason: "log density is not finite at the initial point".into(),
        });
    }

    let mut inv_mass = vec![1.0; dim];
    let mut step = initial_step_size(target, &current, &inv_mass, 1.0, &mut rng);
    let da_opts = DualAverageOptions::default();
    let mut dual = DualAverage::new(da_opts, step);
    let windows = metric_windows(cfg.warmup);
    let mut estimator = VarianceEstimator::new(dim);

    let n_draws = cfg.draws_per_chain();
    let mut draws = Vec::with_capacity(n_draws);
    let mut energy_errors = Vec::with_capacity(n_draws);
    let mut warmup_divergences = 0;
    let mut divergences = 0;
    let mut accept_sum = 0.0;
    let mut n_leapfrog = 0;
    let mut max_tree_depth_hits = 0;

    for iter in 0..cfg.iterations {
        let warming = iter < cfg.warmup;
        refresh_momentum(&mut current, &inv_mass, &mut rng);
        let nuts = Nuts {
            target,
            inv_mass: &inv_mass,
            step_size: step,
            max_depth: cfg.max_tree_depth,
            max_energy_error: cfg.divergence_threshold,
        };
        let t = nuts.transition(current, &mut rng);
        current = t.point;

        if warming {
            if t.divergent {
                warmup_divergences += 1;
            }
            dual.advance(t.accept_stat, cfg.target_acceptance);
            step = dual.current_step_size();
            if let Some(&(_, end)) = windows.iter().find(|(s, e)| (*s..*e).contains(&iter)) {
                estimator.add(&current.position);
                if iter + 1 == end {
                    inv_mass = estimator.regularized_variance();
                    estimator.reset();
                    step = initial_step_size(target, &current, &inv_mass, step, &mut rng);
                    dual = DualAverage::new(da_opts, step);
                }
            }
            if iter + 1 == cfg.warmup {
                step = dual.final_step_size();
                if warmup_divergences == cfg.warmup {
                    return Err(Error::SamplerFailure {
                        chain: chain_id,
                        reason: format!(
                            "all {} warmup transitions diverged (step size {step:e})",
                            cfg.warmup
                        ),
                    });
                }
            }
        } else {
            if t.divergent {
                divergences += 1;
            }
            if t.tree_depth >= cfg.max_tree_depth {
                max_tree_depth_hits += 1;
            }
            accept_sum += t.accept_stat;
            n_leapfrog += t.n_leapfrog;
            energy_errors.push(t.energy_error);
            draws.push(current.position.clone());
        }
    }

    Ok(RawChain {
        draws,
        energy_errors,
        stats: ChainStats {
            chain_id,
            divergences,
            warmup_divergences,
            step_size: step,
            inv_mass,
            mean_accept_stat: accept_sum / n_draws as f64,
            n_leapfrog,
            max_tree_depth_hits,
        },
    })
}

/// Starting point: `mu_i` at the mean of the two arms' continuity-corrected
/// logits, `theta = 0`, `zeta = 0`, `log tau = log 0.1`.
pub fn initial_position(data: &MetaDataset) -> Vec<f64> {
    let k = data.len();
    let mut x = vec![0.0; 2 * k + 2];
    for (i, s) in data.studies().iter().enumerate() {
        let corrected = |r: u64, n: u64| logit((r as f64 + 0.5) / (n as f64 + 1.0));
        x[i] = 0.5
            * (corrected(s.control.events(), s.control.total())
                + corrected(s.experimental.events(), s.experimental.total()));
    }
    x[2 * k + 1] = 0.1f64.ln();
    x
}

/// Post-warmup draws of one chain on the natural scale.
#[derive(Debug, Clone)]
pub struct ChainDraws {
    pub theta: Vec<f64>,
    pub tau: Vec<f64>,
    /// `mu[d][i]`: draw `d`, study `i`.
    pub mu: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub energy_errors: Vec<f64>,
    pub stats: ChainStats,
}

impl ChainDraws {
    fn from_raw(k: usize, raw: RawChain) -> Self {
        let mut out = Self {
            theta: Vec::with_capacity(raw.draws.len()),
            tau: Vec::with_capacity(raw.draws.len()),
            mu: Vec::with_capacity(raw.draws.len()),
            zeta: Vec::with_capacity(raw.draws.len()),
            energy_errors: raw.energy_errors,
            stats: raw.stats,
        };
        for d in raw.draws {
            out.mu.push(d[..k].to_vec());
            out.theta.push(d[k]);
            out.zeta.push(d[k + 1..2 * k + 1].to_vec());
            out.tau.push(d[2 * k + 1].exp());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }
}

/// Runs chain `chain_id` on the posterior of `data` under `priors`.
pub fn run_chain(
    data: &MetaDataset,
    priors: &PriorConfig,
    cfg: &SamplerConfig,
    chain_id: usize,
) -> Result<ChainDraws> {
    let target = Posterior::new(data, *priors)?;
    let raw = run_chain_on_target(&target, &initial_position(data), cfg, chain_id)?;
    Ok(ChainDraws::from_raw(data.len(), raw))
}

#[derive(Debug, Clone)]
pub struct PosteriorDraws {
    pub chains: Vec<ChainDraws>,
    pub rhat_theta: f64,
    pub rhat_tau: f64,
}

impl PosteriorDraws {
    pub fn theta(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.theta.iter().copied()).collect()
    }

    pub fn tau(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.tau.iter().copied()).collect()
    }

    pub fn len(&self) -> usize {
        self.chains.iter().map(ChainDraws::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn divergences(&self) -> usize {
        self.chains.iter().map(|c| c.stats.divergences).sum()
    }

    pub fn theta_median(&self) -> f64 {
        median(&self.theta())
    }

    pub fn tau_median(&self) -> f64 {
        median(&self.tau())
    }

    pub fn stats(&self) -> Vec<ChainStats> {
        self.chains.iter().map(|c| c.stats.clone()).collect()
    }
}

fn rhat_or_nan(chains: &[Vec<f64>]) -> f64 {
    rhat(chains).unwrap_or(f64::NAN)
}

/// Runs `cfg.chains` independent chains in parallel and merges them in
/// chain order. R-hat is `NaN` when fewer than two chains or four draws
/// per chain are available.
pub fn run_chains(
    data: &MetaDataset,
    priors: &PriorConfig,
    cfg: &SamplerConfig,
) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let chains = (0..cfg.chains)
        .into_par_iter()
        .map(|id| run_chain(data, priors, cfg, id))
        .collect::<Result<Vec<_>>>()?;
    let thetas: Vec<Vec<f64>> = chains.iter().map(|c| c.theta.clone()).collect();
    let taus: Vec<Vec<f64>> = chains.iter().map(|c| c.tau.clone()).collect();
    Ok(PosteriorDraws {
        rhat_theta: rhat_or_nan(&thetas),
        rhat_tau: rhat_or_nan(&taus),
        chains,
    })
}
