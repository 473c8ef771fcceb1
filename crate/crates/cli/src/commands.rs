//! The four subcommands. Each returns its rendered output so that callers
//! decide where it goes.

use crate::config::{FitConfig, Format, SimulateConfig};
use crate::dataset::parse_dataset;
use anyhow::{bail, Result};
use bnhm::inference::{forest_rows, summarize_fit, EffectSummary, FitOutput, ForestRow, Method};
use bnhm::mle::{fit_mle, MleResult};
use bnhm::priors::WipDerivation;
use bnhm::sampler::{effective_sample_size, run_chains, SamplerConfig};
use bnhm::simulation::{run_scenario, scenario_grid, GridKind, ScenarioReport};
use bnhm::PriorConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerDiagnostics {
    pub draws: usize,
    pub divergences: usize,
    pub rhat_theta: Option<f64>,
    pub rhat_tau: Option<f64>,
    pub ess_theta: Option<f64>,
    pub step_sizes: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodFit {
    pub method: Method,
    pub priors: Option<PriorConfig>,
    /// Absent when the likelihood fit did not converge.
    pub summary: Option<EffectSummary>,
    pub diagnostics: Option<SamplerDiagnostics>,
    pub mle: Option<MleResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub dataset: String,
    pub studies: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub results: Vec<MethodFit>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn fit(cfg: &FitConfig) -> Result<FitReport> {
    let data = parse_dataset(&cfg.dataset)?;
    let mut results = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let fit = match cfg.priors(method) {
            Some(priors) => {
                let draws = run_chains(&data, &priors, &cfg.sampler)?;
                let thetas: Vec<Vec<f64>> = draws.chains.iter().map(|c| c.theta.clone()).collect();
                MethodFit {
                    method,
                    priors: Some(priors),
                    summary: Some(summarize_fit(FitOutput::Draws(&draws), method)?),
                    diagnostics: Some(SamplerDiagnostics {
                        draws: draws.len(),
                        divergences: draws.divergences(),
                        rhat_theta: finite(draws.rhat_theta),
                        rhat_tau: finite(draws.rhat_tau),
                        ess_theta: finite(effective_sample_size(&thetas)),
                        step_sizes: draws.chains.iter().map(|c| c.stats.step_size).collect(),
                    }),
                    mle: None,
                }
            }
            None => {
                let r = fit_mle(&data, cfg.mle_order)?;
                MethodFit {
                    method,
                    priors: None,
                    summary: summarize_fit(FitOutput::Mle(&r), method).ok(),
                    diagnostics: None,
                    mle: Some(r),
                }
            }
        };
        results.push(fit);
    }
    Ok(FitReport {
        dataset: cfg.dataset.display().to_string(),
        studies: data.len(),
        seed: cfg.sampler.seed,
        sampler: cfg.sampler,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub kind: GridKind,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub reports: Vec<ScenarioReport>,
}

pub fn simulate(cfg: &SimulateConfig) -> Result<SimulationOutput> {
    let grid = scenario_grid(cfg.kind);
    for k in &cfg.k {
        if !grid.iter().any(|s| s.k == *k) {
            bail!("invalid override: k = {k} is not in the grid");
        }
    }
    for t in &cfg.theta {
        if !grid.iter().any(|s| s.theta_true == *t) {
            bail!("invalid override: theta = {t} is not in the grid");
        }
    }
    let seed = cfg.simulation.sampler.seed;
    let mut reports = Vec::new();
    for spec in grid {
        if (!cfg.k.is_empty() && !cfg.k.contains(&spec.k))
            || (!cfg.theta.is_empty() && !cfg.theta.contains(&spec.theta_true))
        {
            continue;
        }
        let spec = bnhm::simulation::ScenarioSpec {
            seed,
            replications: cfg.replications.unwrap_or(spec.replications),
            ..spec
        };
        reports.push(run_scenario(&spec, &cfg.methods, &cfg.simulation)?);
    }
    Ok(SimulationOutput {
        kind: cfg.kind,
        seed,
        sampler: cfg.simulation.sampler,
        reports,
    })
}

pub fn forest(path: &std::path::Path) -> Result<Vec<ForestRow>> {
    Ok(forest_rows(&parse_dataset(path)?))
}

pub fn wip_sigma(delta: f64) -> Result<WipDerivation> {
    Ok(WipDerivation::from_delta(delta)?)
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        String::new()
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, num)
}

fn csv_table(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn render_fit(report: &FitReport, format: Format) -> Result<String> {
    match format {
        Format::Json => json(report),
        Format::Csv => {
            let rows = report
                .results
                .iter()
                .map(|r| {
                    let s = r.summary.as_ref();
                    let d = r.diagnostics.as_ref();
                    vec![
                        r.method.to_string(),
                        opt(s.map(|s| s.point_log_or)),
                        opt(s.map(|s| s.interval_log_or.0)),
                        opt(s.map(|s| s.interval_log_or.1)),
                        opt(s.map(|s| s.point_or)),
                        opt(s.map(|s| s.interval_or.0)),
                        opt(s.map(|s| s.interval_or.1)),
                        opt(s.map(|s| s.tau_hat)),
                        opt(d.and_then(|d| d.rhat_theta)),
                        d.map_or_else(String::new, |d| d.divergences.to_string()),
                        r.mle.as_ref().map_or(true, |m| m.converged).to_string(),
                        report.seed.to_string(),
                    ]
                })
                .collect();
            csv_table(
                &[
                    "method", "point_log_or", "low_log_or", "high_log_or", "point_or", "low_or",
                    "high_or", "tau_hat", "rhat_theta", "divergences", "converged", "seed",
                ],
                rows,
            )
        }
    }
}

pub const SIMULATION_COLUMNS: [&str; 17] = [
    "scenario_id",
    "k",
    "theta_true",
    "tau_true",
    "baseline_low",
    "baseline_high",
    "replications",
    "seed",
    "method",
    "replications_used",
    "bias_theta",
    "coverage",
    "mean_interval_length",
    "bias_tau",
    "failure_fraction",
    "fraction_single_zero",
    "fraction_double_zero",
];

pub fn render_simulation(out: &SimulationOutput, format: Format) -> Result<String> {
    match format {
        Format::Json => json(out),
        Format::Csv => {
            let mut rows = Vec::new();
            for r in &out.reports {
                for m in &r.methods {
                    rows.push(vec![
                        r.spec.scenario_id.to_string(),
                        r.spec.k.to_string(),
                        num(r.spec.theta_true),
                        num(r.spec.tau_true),
                        num(r.spec.baseline_risk_range.0),
                        num(r.spec.baseline_risk_range.1),
                        r.spec.replications.to_string(),
                        r.spec.seed.to_string(),
                        m.method.to_string(),
                        m.replications_used.to_string(),
                        opt(m.bias_theta),
                        opt(m.coverage),
                        opt(m.mean_interval_length),
                        opt(m.bias_tau),
                        num(m.failure_fraction),
                        num(r.fraction_single_zero),
                        num(r.fraction_double_zero),
                    ]);
                }
            }
            csv_table(&SIMULATION_COLUMNS, rows)
        }
    }
}

pub fn render_forest(rows: &[ForestRow], format: Format) -> Result<String> {
    match format {
        Format::Json => json(&rows),
        Format::Csv => csv_table(
            &["study", "log_or", "ci_low", "ci_high", "correction_applied"],
            rows.iter()
                .map(|r| {
                    vec![
                        r.study.clone(),
                        num(r.log_or),
                        num(r.ci_low),
                        num(r.ci_high),
                        r.correction_applied.to_string(),
                    ]
                })
                .collect(),
        ),
    }
}

pub fn render_wip_sigma(w: &WipDerivation, format: Format) -> Result<String> {
    match format {
        Format::Json => json(w),
        Format::Csv => csv_table(
            &["delta", "sigma_prior", "effective_sample_size"],
            vec![vec![num(w.delta), num(w.sigma_prior), num(w.effective_sample_size)]],
        ),
    }
}
