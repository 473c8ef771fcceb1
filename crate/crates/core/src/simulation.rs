//! Seeded Monte-Carlo harness: generates datasets from the hierarchical
//! model, fits each estimator and aggregates bias, coverage, interval
//! length, zero-study fractions and likelihood-fit failures.
//!
//! Randomness is split by a fixed rule. The data of replicate `r` in
//! scenario `s` come from `ChaCha8Rng` seeded with `mix(seed, s)` on stream
//! `r`; the sampler for method `m` on that replicate is seeded with
//! `mix(mix(mix(seed, s), r), m)` with `m` = 1, 2, 3 for wip, vague, mle.

use crate::data::{MetaDataset, Study, StudyArm};
use crate::error::{Error, Result};
use crate::inference::{summarize_draws, Method};
use crate::math::{logistic, logit, mean};
use crate::mle::{fit_mle, DEFAULT_ORDER};
use crate::sampler::{run_chains, SamplerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_TAU_TRUE: f64 = 0.28;
pub const RARE_BASELINE: (f64, f64) = (0.005, 0.05);
pub const HIGH_BASELINE: (f64, f64) = (0.05, 0.2);
pub const GRID_K: [usize; 3] = [2, 3, 5];
pub const GRID_THETA: [f64; 13] = [-5.0, -4.0, -3.0, -2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 4.0, 5.0];
pub const DEFAULT_REPLICATIONS: usize = 500;
const MIN_STUDY_SIZE: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Stable identifier used for stream splitting.
    pub scenario_id: u64,
    pub k: usize,
    pub theta_true: f64,
    pub tau_true: f64,
    pub baseline_risk_range: (f64, f64),
    /// `(meanlog, sdlog)` of the study-size distribution.
    pub sample_size_lognormal: (f64, f64),
    pub replications: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(k: usize, theta_true: f64) -> Self {
        Self {
            scenario_id: 0,
            k,
            theta_true,
            tau_true: DEFAULT_TAU_TRUE,
            baseline_risk_range: RARE_BASELINE,
            sample_size_lognormal: (5.0, 1.0),
            replications: DEFAULT_REPLICATIONS,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (low, high) = self.baseline_risk_range;
        if self.k < 2 {
            return Err(Error::InvalidConfig("k >= 2 violated".into()));
        }
        if !(0.0 < low && low <= high && high < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "0 < low <= high < 1 violated by baseline range ({low}, {high})"
            )));
        }
        if !(self.tau_true >= 0.0) || !self.tau_true.is_finite() || !self.theta_true.is_finite() {
            return Err(Error::InvalidConfig("theta_true finite and tau_true >= 0 required".into()));
        }
        if !(self.sample_size_lognormal.1 > 0.0) {
            return Err(Error::InvalidConfig("study-size sdlog must be > 0".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("replications >= 1 violated".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridKind {
    Rare,
    HighBaseline,
}

impl std::str::FromStr for GridKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rare" => Ok(GridKind::Rare),
            "high-baseline" => Ok(GridKind::HighBaseline),
            other => Err(Error::InvalidConfig(format!(
                "unknown grid `{other}` (expected rare or high-baseline)"
            ))),
        }
    }
}

/// All `k x theta` scenarios of a grid, ids in row-major order.
pub fn scenario_grid(kind: GridKind) -> Vec<ScenarioSpec> {
    let baseline = match kind {
        GridKind::Rare => RARE_BASELINE,
        GridKind::HighBaseline => HIGH_BASELINE,
    };
    let mut out = Vec::with_capacity(GRID_K.len() * GRID_THETA.len());
    for &k in &GRID_K {
        for &theta in &GRID_THETA {
            out.push(ScenarioSpec {
                scenario_id: out.len() as u64,
                baseline_risk_range: baseline,
                ..ScenarioSpec::new(k, theta)
            });
        }
    }
    out
}

/// SplitMix64-style mixing of two words into one seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(b.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generating values of one replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueParameters {
    pub baseline_risk: Vec<f64>,
    pub mu: Vec<f64>,
    pub theta_study: Vec<f64>,
    pub p_control: Vec<f64>,
    pub p_experimental: Vec<f64>,
}

pub fn replicate_rng(spec: &ScenarioSpec, replicate_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(spec.seed, spec.scenario_id));
    rng.set_stream(replicate_index as u64);
    rng
}

fn draw_binomial<R: Rng>(rng: &mut R, n: u64, p: f64) -> u64 {
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Study size `round(LogNormal)` floored at 2.
pub fn draw_study_size<R: Rng>(rng: &mut R, meanlog: f64, sdlog: f64) -> u64 {
    let size: f64 = LogNormal::new(meanlog, sdlog).expect("valid lognormal").sample(rng);
    (size.round() as u64).max(MIN_STUDY_SIZE)
}

/// One dataset of the scenario, deterministic in `(seed, scenario_id, replicate_index)`.
pub fn generate_dataset(
    spec: &ScenarioSpec,
    replicate_index: usize,
) -> Result<(MetaDataset, TrueParameters)> {
    spec.validate()?;
    let mut rng = replicate_rng(spec, replicate_index);
    let (low, high) = spec.baseline_risk_range;
    let effect = Normal::new(spec.theta_true, spec.tau_true).expect("valid normal");
    let mut studies = Vec::with_capacity(spec.k);
    let mut truth = TrueParameters {
        baseline_risk: Vec::with_capacity(spec.k),
        mu: Vec::with_capacity(spec.k),
        theta_study: Vec::with_capacity(spec.k),
        p_control: Vec::with_capacity(spec.k),
        p_experimental: Vec::with_capacity(spec.k),
    };
    for i in 0..spec.k {
        let size = draw_study_size(&mut rng, spec.sample_size_lognormal.0, spec.sample_size_lognormal.1);
        let n_exp = loop {
            let n = draw_binomial(&mut rng, size, 0.5);
            if n >= 1 && n < size {
                break n;
            }
        };
        let n_ctrl = size - n_exp;
        let p = if low == high {
            low
        } else {
            rng.sample(Uniform::new(low, high).expect("valid range"))
        };
        let theta_i = effect.sample(&mut rng);
        let p_exp = logistic(logit(p) + theta_i);
        let r_ctrl = draw_binomial(&mut rng, n_ctrl, p);
        let r_exp = draw_binomial(&mut rng, n_exp, p_exp);
        studies.push(Study::new(
            format!("study{}", i + 1),
            StudyArm::new(r_ctrl, n_ctrl)?,
            StudyArm::new(r_exp, n_exp)?,
        ));
        truth.baseline_risk.push(p);
        truth.mu.push(logit(p) + 0.5 * spec.theta_true);
        truth.theta_study.push(theta_i);
        truth.p_control.push(p);
        truth.p_experimental.push(p_exp);
    }
    Ok((MetaDataset::new(studies)?, truth))
}

/// Fractions of studies with exactly one and with two zero-event arms.
pub fn zero_fractions(data: &MetaDataset) -> (f64, f64) {
    let k = data.len() as f64;
    let single = data.studies().iter().filter(|s| s.is_single_zero()).count() as f64;
    let double = data.studies().iter().filter(|s| s.is_double_zero()).count() as f64;
    (single / k, double / k)
}

/// Run-time settings shared by all replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub sampler: SamplerConfig,
    pub mle_order: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sampler: SamplerConfig {
                chains: 2,
                iterations: 1500,
                warmup: 500,
                ..SamplerConfig::default()
            },
            mle_order: DEFAULT_ORDER,
        }
    }
}

/// Point estimate, 95% interval and heterogeneity estimate of one fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub theta: f64,
    pub low: f64,
    pub high: f64,
    pub tau: f64,
}

/// Everything recorded for one replicate. `None` marks a failed fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub replicate_index: usize,
    pub single_zero: f64,
    pub double_zero: f64,
    pub estimates: Vec<(Method, Option<Estimate>)>,
}

fn method_seed(spec: &ScenarioSpec, replicate_index: usize, method: Method) -> u64 {
    let tag = match method {
        Method::Wip => 1,
        Method::Vague => 2,
        Method::Mle => 3,
    };
    mix(mix(mix(spec.seed, spec.scenario_id), replicate_index as u64), tag)
}

fn fit_one(
    data: &MetaDataset,
    method: Method,
    seed: u64,
    cfg: &SimulationConfig,
) -> Option<Estimate> {
    match method.priors() {
        Some(priors) => {
            let sampler = SamplerConfig { seed, ..cfg.sampler };
            let draws = run_chains(data, &priors, &sampler).ok()?;
            let s = summarize_draws(method, &draws.theta(), &draws.tau()).ok()?;
            Some(Estimate {
                theta: s.point_log_or,
                low: s.interval_log_or.0,
                high: s.interval_log_or.1,
                tau: s.tau_hat,
            })
        }
        None => {
            let r = fit_mle(data, cfg.mle_order).ok()?;
            let (low, high) = r.ci_95?;
            r.converged.then_some(Estimate {
                theta: r.theta_hat,
                low,
                high,
                tau: r.tau_hat,
            })
        }
    }
}

pub fn run_replicate(
    spec: &ScenarioSpec,
    replicate_index: usize,
    methods: &[Method],
    cfg: &SimulationConfig,
) -> Result<ReplicateOutcome> {
    let (data, _) = generate_dataset(spec, replicate_index)?;
    let (single_zero, double_zero) = zero_fractions(&data);
    let estimates = methods
        .iter()
        .map(|&m| (m, fit_one(&data, m, method_seed(spec, replicate_index, m), cfg)))
        .collect();
    Ok(ReplicateOutcome {
        replicate_index,
        single_zero,
        double_zero,
        estimates,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: Method,
    pub replications_used: usize,
    /// `None` when no replicate produced an estimate.
    pub bias_theta: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_interval_length: Option<f64>,
    pub bias_tau: Option<f64>,
    pub failure_fraction: f64,
}

/// Metrics over completed fits; `attempted` counts failures too.
pub fn aggregate(
    method: Method,
    estimates: &[Estimate],
    attempted: usize,
    theta_true: f64,
    tau_true: f64,
) -> MethodMetrics {
    let used = estimates.len();
    let if_any = |v: f64| (used > 0).then_some(v);
    let bias_theta = mean(&estimates.iter().map(|e| e.theta - theta_true).collect::<Vec<_>>());
    let covered = estimates
        .iter()
        .filter(|e| e.low <= theta_true && theta_true <= e.high)
        .count();
    let lengths: Vec<f64> = estimates.iter().map(|e| e.high - e.low).collect();
    let bias_tau = mean(&estimates.iter().map(|e| e.tau - tau_true).collect::<Vec<_>>());
    MethodMetrics {
        method,
        replications_used: used,
        bias_theta: if_any(bias_theta),
        coverage: if_any(covered as f64 / used.max(1) as f64),
        mean_interval_length: if_any(mean(&lengths)),
        bias_tau: if_any(bias_tau),
        failure_fraction: if attempted == 0 {
            0.0
        } else {
            (attempted - used) as f64 / attempted as f64
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub spec: ScenarioSpec,
    pub fraction_single_zero: f64,
    pub fraction_double_zero: f64,
    pub mle_failure_fraction: Option<f64>,
    pub methods: Vec<MethodMetrics>,
}

impl ScenarioReport {
    pub fn method(&self, method: Method) -> Option<&MethodMetrics> {
        self.methods.iter().find(|m| m.method == method)
    }
}

/// Deterministic reduction of replicate outcomes, in replicate order.
pub fn summarize_outcomes(
    spec: &ScenarioSpec,
    methods: &[Method],
    outcomes: &[ReplicateOutcome],
) -> ScenarioReport {
    let n = outcomes.len();
    let metrics: Vec<MethodMetrics> = methods
        .iter()
        .map(|&m| {
            let done: Vec<Estimate> = outcomes
                .iter()
                .filter_map(|o| o.estimates.iter().find(|(mm, _)| *mm == m).and_then(|(_, e)| *e))
                .collect();
            aggregate(m, &done, n, spec.theta_true, spec.tau_true)
        })
        .collect();
    ScenarioReport {
        spec: spec.clone(),
        fraction_single_zero: mean(&outcomes.iter().map(|o| o.single_zero).collect::<Vec<_>>()),
        fraction_double_zero: mean(&outcomes.iter().map(|o| o.double_zero).collect::<Vec<_>>()),
        mle_failure_fraction: metrics
            .iter()
            .find(|m| m.method == Method::Mle)
            .map(|m| m.failure_fraction),
        methods: metrics,
    }
}

/// Runs all replicates of a scenario in parallel and aggregates them.
pub fn run_scenario(
    spec: &ScenarioSpec,
    methods: &[Method],
    cfg: &SimulationConfig,
) -> Result<ScenarioReport> {
    spec.validate()?;
    cfg.sampler.validate()?;
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let outcomes = (0..spec.replications)
        .into_par_iter()
        .map(|r| run_replicate(spec, r, &methods, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_outcomes(spec, &methods, &outcomes))
}
