//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion fails.

use bnhm::data::{crins_death, crins_ptld, MetaDataset};
use bnhm::inference::{hdi, summarize_fit, EffectSummary, FitOutput, Method};
use bnhm::math::{binomial_logpmf_logit, log_sum_exp, median, quantile_sorted};
use bnhm::mle::{fit_mle, marginal_log_likelihood};
use bnhm::model::{gradient, log_posterior, LogDensity, ParameterVector, PriorTarget};
use bnhm::priors::{default_priors, half_normal_quantile, unit_information_ess, wip_sigma};
use bnhm::sampler::{effective_sample_size, run_chain_on_target, run_chains, PosteriorDraws, SamplerConfig};
use bnhm::simulation::{run_scenario, scenario_grid, GridKind, ScenarioSpec, SimulationConfig};
use bnhm::TauPrior;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use statrs::distribution::{Continuous, ContinuousCDF, Normal as NormalDist};
use std::process::Command;
use std::time::{Duration, Instant};

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
}

fn outcome(name: &'static str, checks: &[(bool, String)]) -> Outcome {
    Outcome {
        name,
        pass: checks.iter().all(|c| c.0),
        detail: checks
            .iter()
            .map(|(ok, msg)| format!("{}{msg}", if *ok { "" } else { "!" }))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn within(label: &str, got: f64, target: f64, tol: f64) -> (bool, String) {
    ((got - target).abs() <= tol, format!("{label} {got:.4} (target {target} +/- {tol})"))
}

fn within_log(label: &str, got: f64, target: f64, tol: f64) -> (bool, String) {
    let d = (got.ln() - target.ln()).abs();
    (d <= tol, format!("{label} {got:.3} (target {target}, log diff {d:.3} <= {tol})"))
}

fn wip_constant() -> Outcome {
    let s = wip_sigma(250.0).unwrap();
    let ess = unit_information_ess(s).unwrap();
    outcome(
        "wip-constant",
        &[within("sigma", s, 2.8166, 1e-3), within("rounded sigma", s, 2.82, 5e-3), within("ess", ess, 2.0, 0.05)],
    )
}

fn half_normal_quantiles() -> Outcome {
    outcome(
        "half-normal-quantiles",
        &[
            within("median", half_normal_quantile(0.5, 0.5), 0.337, 1e-3),
            within("q95", half_normal_quantile(0.5, 0.95), 0.98, 1e-3),
        ],
    )
}

fn wip_fit(data: &MetaDataset, cfg: &SamplerConfig) -> (PosteriorDraws, EffectSummary) {
    let draws = run_chains(data, &default_priors(), cfg).unwrap();
    let summary = summarize_fit(FitOutput::Draws(&draws), Method::Wip).unwrap();
    (draws, summary)
}

fn crins_death_regression() -> Outcome {
    let start = Instant::now();
    let cfg = SamplerConfig { chains: 4, iterations: 2000, warmup: 1000, ..Default::default() };
    let (draws, s) = wip_fit(&crins_death(), &cfg);
    let elapsed = start.elapsed();
    outcome(
        "crins-death-regression",
        &[
            (draws.len() == 4000, format!("draws {}", draws.len())),
            within_log("OR", s.point_or, 0.57, 0.10),
            within_log("HDI low", s.interval_or.0, 0.21, 0.10),
            within_log("HDI high", s.interval_or.1, 1.46, 0.10),
            within("tau", s.tau_hat, 0.30, 0.05),
            (draws.divergences() == 0, format!("divergences {}", draws.divergences())),
            (draws.rhat_theta < 1.05, format!("rhat {:.4}", draws.rhat_theta)),
            (elapsed < Duration::from_secs(60), format!("runtime {:.1}s", elapsed.as_secs_f64())),
        ],
    )
}

fn crins_ptld_regression() -> Outcome {
    let cfg = SamplerConfig { chains: 4, iterations: 11_000, warmup: 1000, ..Default::default() };
    let (draws, s) = wip_fit(&crins_ptld(), &cfg);
    outcome(
        "crins-ptld-regression",
        &[
            (draws.len() == 40_000, format!("draws {}", draws.len())),
            within_log("OR", s.point_or, 1.99, 0.15),
            within_log("HDI low", s.interval_or.0, 0.20, 0.15),
            within_log("HDI high", s.interval_or.1, 25.35, 0.15),
            within("tau", s.tau_hat, 0.33, 0.05),
        ],
    )
}

fn mle_heterogeneity() -> Outcome {
    let death = fit_mle(&crins_death(), 7).unwrap();
    let ptld = fit_mle(&crins_ptld(), 7).unwrap();
    outcome(
        "mle-tau-zero",
        &[
            (death.converged && death.tau_hat <= 0.01, format!("death tau {:.4}", death.tau_hat)),
            (ptld.converged && ptld.tau_hat <= 0.01, format!("ptld tau {:.4}", ptld.tau_hat)),
        ],
    )
}

struct Instance {
    data: MetaDataset,
    mu: Vec<f64>,
    theta: f64,
    tau: f64,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let k = rng.random_range(1..=5);
    let rows: Vec<_> = (0..k)
        .map(|_| {
            let nc = rng.random_range(2..300);
            let nt = rng.random_range(2..300);
            (rng.random_range(0..=nc / 4), nc, rng.random_range(0..=nt / 4), nt)
        })
        .collect();
    Instance {
        data: MetaDataset::from_counts(&rows).unwrap(),
        mu: (0..k).map(|_| rng.random_range(-5.0..0.0)).collect(),
        theta: rng.random_range(-3.0..3.0),
        tau: rng.random_range(0.0..1.0),
    }
}

/// Trapezoid rule on `z in [-12, 12]` with 100k intervals, in log space.
fn dense_oracle(inst: &Instance) -> f64 {
    const POINTS: usize = 100_001;
    let h = 24.0 / (POINTS - 1) as f64;
    let half_ln_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for (i, s) in inst.data.studies().iter().enumerate() {
        total += binomial_logpmf_logit(s.control.events(), s.control.total(), inst.mu[i] - inst.theta / 2.0);
        let a = inst.mu[i] + inst.theta / 2.0;
        let terms: Vec<f64> = (0..POINTS)
            .map(|j| {
                let z = -12.0 + j as f64 * h;
                let w: f64 = if j == 0 || j == POINTS - 1 { 0.5 } else { 1.0 };
                w.ln() + h.ln()
                    + binomial_logpmf_logit(s.experimental.events(), s.experimental.total(), a + z * inst.tau)
                    - half_ln_2pi
                    - 0.5 * z * z
            })
            .collect();
        total += log_sum_exp(&terms);
    }
    total
}

fn order_seven_vs_dense() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut exceed = 0;
    for _ in 0..50 {
        let inst = random_instance(&mut rng);
        let got = marginal_log_likelihood(&inst.data, &inst.mu, inst.theta, inst.tau, 7).unwrap();
        let oracle = dense_oracle(&inst);
        let err = (got - oracle).abs() / oracle.abs().max(1.0);
        worst = worst.max(err);
        exceed += usize::from(err >= 1e-6);
    }
    outcome(
        "mle-order-7-vs-dense",
        &[(worst < 1e-6, format!("max relative error {worst:.2e}, {exceed} of 50 instances >= 1e-6"))],
    )
}

fn gradient_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let families = [TauPrior::HalfNormal, TauPrior::HalfCauchy, TauPrior::Uniform];
    let mut worst: f64 = 0.0;
    for point in 0..200 {
        let k = rng.random_range(1..=6);
        let rows: Vec<_> = (0..k)
            .map(|_| {
                let nc = rng.random_range(1..200);
                let nt = rng.random_range(1..200);
                (rng.random_range(0..=nc), nc, rng.random_range(0..=nt), nt)
            })
            .collect();
        let data = MetaDataset::from_counts(&rows).unwrap();
        let p = ParameterVector::new(
            (0..k).map(|_| rng.random_range(-5.0..2.0)).collect(),
            rng.random_range(-3.0..3.0),
            (0..k).map(|_| rng.random_range(-2.0..2.0)).collect(),
            rng.random_range(-3.0..1.0),
        )
        .unwrap();
        let mut priors = default_priors();
        priors.tau_prior_dist = families[point % 3];
        if priors.tau_prior_dist == TauPrior::Uniform {
            priors.tau_prior_scale = 10.0;
        }
        let g = gradient(&data, &p, &priors).unwrap();
        let x = p.to_unconstrained();
        let f = |y: &[f64]| {
            let q = ParameterVector::from_unconstrained(k, y).unwrap();
            log_posterior(&data, &q, &priors).unwrap()
        };
        for j in 0..x.len() {
            let h = 1e-5 * x[j].abs().max(1.0);
            let (mut up, mut down) = (x.clone(), x.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (f(&up) - f(&down)) / (2.0 * h);
            worst = worst.max((g[j] - fd).abs() / (1.0 + g[j].abs()));
        }
    }
    outcome("gradient-suite", &[(worst < 1e-5, format!("max relative error {worst:.2e} over 200 points"))])
}

fn brute_force_hdi(sorted: &[f64], mass: f64) -> (f64, f64) {
    let m = ((mass * sorted.len() as f64) - 1e-9).ceil() as usize;
    let mut best = (sorted[0], sorted[sorted.len() - 1]);
    let mut best_width = f64::INFINITY;
    for lo in 0..sorted.len() {
        for hi in lo..sorted.len() {
            if hi + 1 - lo >= m && sorted[hi] - sorted[lo] < best_width {
                best_width = sorted[hi] - sorted[lo];
                best = (sorted[lo], sorted[hi]);
            }
        }
    }
    best
}

fn hdi_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut mismatches, mut median_outside) = (0, 0);
    for set in 0..1000 {
        let n = rng.random_range(20..300);
        let samples: Vec<f64> = match set % 3 {
            0 => (0..n).map(|_| Normal::new(1.0, 3.0).unwrap().sample(&mut rng)).collect(),
            1 => (0..n).map(|_| Exp::new(0.5).unwrap().sample(&mut rng)).collect(),
            _ => (0..n).map(|_| rng.random_range(0..8) as f64).collect(),
        };
        let got = hdi(&samples, 0.95).unwrap();
        let mut sorted = samples.clone();
        sorted.sort_by(f64::total_cmp);
        mismatches += usize::from(got != brute_force_hdi(&sorted, 0.95));
        let med = median(&samples);
        median_outside += usize::from(med < got.0 || med > got.1);
    }
    outcome(
        "hdi-oracle",
        &[
            (mismatches == 0, format!("{mismatches} of 1000 differ from brute force")),
            (median_outside == 0, format!("median outside in {median_outside} sets")),
        ],
    )
}

fn prior_recovery() -> Outcome {
    let priors = default_priors();
    let k = 3;
    let target = PriorTarget::new(k, priors).unwrap();
    let mut init = vec![0.0; target.dim()];
    init[2 * k + 1] = 0.3f64.ln();
    let cfg = SamplerConfig { seed: 5, ..Default::default() };
    let cols: Vec<Vec<f64>> = (0..cfg.chains)
        .map(|c| run_chain_on_target(&target, &init, &cfg, c).unwrap().column(k))
        .collect();
    let ess = effective_sample_size(&cols);
    let mut theta = cols.concat();
    theta.sort_by(f64::total_cmp);
    let exact = NormalDist::new(0.0, priors.theta_prior.sd).unwrap();
    let checks: Vec<(bool, String)> = [0.05, 0.5, 0.95]
        .iter()
        .map(|&q| {
            let xq = exact.inverse_cdf(q);
            let mc_se = (q * (1.0 - q) / ess).sqrt() / exact.pdf(xq);
            let got = quantile_sorted(&theta, q);
            ((got - xq).abs() < 3.0 * mc_se, format!("q{q}: {got:.3} vs {xq:.3} (3se {:.3})", 3.0 * mc_se))
        })
        .collect();
    outcome("prior-recovery", &checks)
}

fn desk_simulation() -> Outcome {
    let grid = scenario_grid(GridKind::Rare);
    let spec_for = |theta: f64| -> ScenarioSpec {
        let base = grid.iter().find(|s| s.k == 3 && s.theta_true == theta).unwrap();
        ScenarioSpec { replications: 500, seed: 2024, ..base.clone() }
    };
    let cfg = SimulationConfig::default();
    let negative = run_scenario(&spec_for(-2.0), &Method::ALL, &cfg).unwrap();
    let null = run_scenario(&spec_for(0.0), &Method::ALL, &cfg).unwrap();
    let get = |r: &bnhm::simulation::ScenarioReport, m| r.method(m).unwrap().clone();
    let (wip_n, vague_n, mle_n) = (get(&negative, Method::Wip), get(&negative, Method::Vague), get(&negative, Method::Mle));
    let (wip_0, vague_0, mle_0) = (get(&null, Method::Wip), get(&null, Method::Vague), get(&null, Method::Mle));
    let cov = [wip_n.coverage.unwrap(), wip_0.coverage.unwrap()];
    let len = |m: &bnhm::simulation::MethodMetrics| m.mean_interval_length.unwrap();
    let bias_wip = wip_n.bias_theta.unwrap();
    let bias_mle = mle_n.bias_theta.unwrap_or(f64::NAN);
    let tau_bias = [mle_n.bias_tau, mle_0.bias_tau, wip_n.bias_tau, wip_0.bias_tau, vague_n.bias_tau, vague_0.bias_tau]
        .map(|b| b.unwrap_or(f64::NAN));
    outcome(
        "desk-simulation",
        &[
            (cov.iter().all(|&c| c >= 0.93), format!("(a) WIP coverage {:.3} / {:.3}", cov[0], cov[1])),
            (
                len(&wip_n) < len(&vague_n) && len(&wip_0) < len(&vague_0),
                format!(
                    "(b) length WIP {:.2} vs vague {:.2}, WIP {:.2} vs vague {:.2}",
                    len(&wip_n),
                    len(&vague_n),
                    len(&wip_0),
                    len(&vague_0)
                ),
            ),
            (bias_wip.abs() < bias_mle.abs(), format!("(c) bias WIP {bias_wip:.3} vs MLE {bias_mle:.3}")),
            (
                mle_n.failure_fraction > mle_0.failure_fraction,
                format!("(d) MLE failures {:.3} vs {:.3}", mle_n.failure_fraction, mle_0.failure_fraction),
            ),
            (
                tau_bias[..2].iter().all(|&b| b < 0.0) && tau_bias[2..].iter().all(|&b| b > 0.0),
                format!("(e) tau bias MLE {:.3}/{:.3}, Bayesian {:.3}/{:.3}/{:.3}/{:.3}", tau_bias[0], tau_bias[1], tau_bias[2], tau_bias[3], tau_bias[4], tau_bias[5]),
            ),
        ],
    )
}

fn determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_bnhm");
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("death.csv");
    std::fs::write(
        &data,
        "study,r_ctrl,n_ctrl,r_trt,n_trt\nHeffron,3,20,4,61\nGanschow,3,54,1,54\nSpada,3,36,4,36\nGras,3,34,2,50\n",
    )
    .unwrap();
    let data = data.to_str().unwrap();
    let commands: [&[&str]; 5] = [
        &["fit", data, "--method", "wip,vague,mle", "--seed", "3"],
        &["fit", data, "--format", "csv", "--iter", "600", "--warmup", "300"],
        &["simulate", "--k", "2", "--theta", "0", "--replications", "4", "--format", "csv", "--seed", "9"],
        &["forest", data],
        &["wip-sigma", "--delta", "250"],
    ];
    let mut checks = Vec::new();
    for args in commands {
        let run = || Command::new(bin).args(args).env_remove("BNHM_SEED").output().unwrap();
        let (a, b) = (run(), run());
        let ok = a.status.success() && b.status.success() && a.stdout == b.stdout && !a.stdout.is_empty();
        checks.push((ok, format!("{} {}", args[0], if ok { "identical" } else { "differs" })));
    }
    outcome("determinism", &checks)
}

#[test]
fn acceptance() {
    let criteria: [fn() -> Outcome; 11] = [
        wip_constant,
        half_normal_quantiles,
        crins_death_regression,
        crins_ptld_regression,
        mle_heterogeneity,
        order_seven_vs_dense,
        gradient_suite,
        hdi_oracle,
        prior_recovery,
        desk_simulation,
        determinism,
    ];
    let mut failing = Vec::new();
    for criterion in criteria {
        let o = criterion();
        println!("{} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail);
        if !o.pass {
            failing.push(o.name);
        }
    }
    assert!(failing.is_empty(), "failing criteria: {failing:?}");
}
