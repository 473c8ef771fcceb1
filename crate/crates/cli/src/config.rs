//! Command-line flags, the optional JSON config file, and their merge into
//! run configurations. Flags (and the seed environment variable) take
//! precedence over the file; the file takes precedence over defaults.

use anyhow::{bail, Context, Result};
use bnhm::inference::Method;
use bnhm::model::NormalPrior;
use bnhm::priors::{default_priors, vague_priors, wip_sigma};
use bnhm::sampler::SamplerConfig;
use bnhm::simulation::{GridKind, SimulationConfig};
use bnhm::{PriorConfig, TauPrior};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const SEED_ENV: &str = "BNHM_SEED";
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Parser)]
#[command(name = "bnhm", version, about = "Random-effects meta-analysis of rare binary events")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the hierarchical model to a dataset with one or more methods.
    Fit(FitArgs),
    /// Run the Monte-Carlo simulation over a scenario grid.
    Simulate(SimulateArgs),
    /// Observed per-study log odds ratios with 95% intervals.
    Forest(ForestArgs),
    /// Prior sd and effective sample size for an odds-ratio bound.
    WipSigma(WipSigmaArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// `mean,sd` pair for a normal prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalArg(pub f64, pub f64);

impl std::str::FromStr for NormalArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [m, sd] = parts.as_slice() else {
            return Err(format!("expected `mean,sd`, got `{s}`"));
        };
        let m: f64 = m.parse().map_err(|_| format!("invalid mean `{m}`"))?;
        let sd: f64 = sd.parse().map_err(|_| format!("invalid sd `{sd}`"))?;
        if !(sd > 0.0) || !sd.is_finite() || !m.is_finite() {
            return Err(format!("prior needs a finite mean and sd > 0, got `{s}`"));
        }
        Ok(NormalArg(m, sd))
    }
}

impl From<NormalArg> for NormalPrior {
    fn from(a: NormalArg) -> Self {
        NormalPrior::new(a.0, a.1)
    }
}

#[derive(Debug, Clone, Args, Default)]
pub struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Write output to this file instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON file with default values for any of the flags.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Default)]
pub struct SamplerArgs {
    #[arg(long)]
    pub chains: Option<usize>,
    /// Iterations per chain, warmup included.
    #[arg(long)]
    pub iter: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long, env = SEED_ENV)]
    pub seed: Option<u64>,
    /// Target mean acceptance statistic during warmup.
    #[arg(long)]
    pub adapt_delta: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Odds-ratio bound for the weakly informative theta prior.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Explicit theta prior `mean,sd` for the wip method.
    #[arg(long, allow_hyphen_values = true)]
    pub theta_prior: Option<NormalArg>,
    /// Baseline prior `mean,sd`.
    #[arg(long, allow_hyphen_values = true)]
    pub mu_prior: Option<NormalArg>,
    #[arg(long, value_parser = clap::value_parser!(TauPrior))]
    pub tau_prior_dist: Option<TauPrior>,
    /// Scale of the heterogeneity prior.
    #[arg(long)]
    pub tau_prior: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// CSV file with header `study,r_ctrl,n_ctrl,r_trt,n_trt`.
    pub dataset: PathBuf,
    /// Methods to run; repeat or separate with commas.
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(Method))]
    pub method: Vec<Method>,
    #[command(flatten)]
    pub priors: PriorArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Gauss-Hermite order for the likelihood fit.
    #[arg(long)]
    pub mle_order: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario grid: rare or high-baseline.
    #[arg(long, value_parser = clap::value_parser!(GridKind))]
    pub kind: Option<GridKind>,
    /// Keep only these study counts.
    #[arg(long, value_delimiter = ',')]
    pub k: Vec<usize>,
    /// Keep only these true effects.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    #[arg(long)]
    pub replications: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(Method))]
    pub method: Vec<Method>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    #[arg(long)]
    pub mle_order: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ForestArgs {
    pub dataset: PathBuf,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct WipSigmaArgs {
    #[arg(long)]
    pub delta: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Config-file keys; each mirrors the flag of the same name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub method: Option<Vec<Method>>,
    pub delta: Option<f64>,
    pub theta_prior: Option<NormalArg>,
    pub mu_prior: Option<NormalArg>,
    pub tau_prior_dist: Option<TauPrior>,
    pub tau_prior: Option<f64>,
    pub chains: Option<usize>,
    pub iter: Option<usize>,
    pub warmup: Option<usize>,
    pub seed: Option<u64>,
    pub adapt_delta: Option<f64>,
    pub mle_order: Option<usize>,
    pub kind: Option<GridKind>,
    pub k: Option<Vec<usize>>,
    pub theta: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub format: Option<Format>,
    pub output: Option<PathBuf>,
}

pub fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config file {}", path.display()))
}

/// Output destination and format after merging.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub format: Format,
    pub path: Option<PathBuf>,
}

impl OutputConfig {
    fn merge(flags: &OutputArgs, file: &FileConfig) -> Self {
        Self {
            format: flags.format.or(file.format).unwrap_or(Format::Json),
            path: flags.output.clone().or_else(|| file.output.clone()),
        }
    }
}

fn merge_sampler(flags: &SamplerArgs, file: &FileConfig, base: SamplerConfig) -> SamplerConfig {
    SamplerConfig {
        chains: flags.chains.or(file.chains).unwrap_or(base.chains),
        iterations: flags.iter.or(file.iter).unwrap_or(base.iterations),
        warmup: flags.warmup.or(file.warmup).unwrap_or(base.warmup),
        seed: flags.seed.or(file.seed).unwrap_or(DEFAULT_SEED),
        target_acceptance: flags.adapt_delta.or(file.adapt_delta).unwrap_or(base.target_acceptance),
        ..base
    }
}

/// Merged configuration of `fit`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub dataset: PathBuf,
    pub methods: Vec<Method>,
    pub wip_priors: PriorConfig,
    pub vague_priors: PriorConfig,
    pub sampler: SamplerConfig,
    pub mle_order: usize,
    pub output: OutputConfig,
}

impl FitConfig {
    pub fn from_args(args: &FitArgs) -> Result<Self> {
        let file = load_file_config(args.output.config.as_deref())?;
        let p = &args.priors;
        let delta = p.delta.or(file.delta);
        let theta_prior = p.theta_prior.or(file.theta_prior);
        if delta.is_some() && theta_prior.is_some() {
            bail!("--delta and --theta-prior are mutually exclusive: supply exactly one");
        }

        let mut shared = default_priors();
        if let Some(mu) = p.mu_prior.or(file.mu_prior) {
            shared.mu_prior = mu.into();
        }
        if let Some(dist) = p.tau_prior_dist.or(file.tau_prior_dist) {
            shared.tau_prior_dist = dist;
        }
        if let Some(scale) = p.tau_prior.or(file.tau_prior) {
            shared.tau_prior_scale = scale;
        }
        let mut wip_priors = shared;
        if let Some(d) = delta {
            wip_priors.theta_prior = NormalPrior::new(0.0, wip_sigma(d)?);
        }
        if let Some(t) = theta_prior {
            wip_priors.theta_prior = t.into();
        }
        let vague_priors = PriorConfig {
            theta_prior: vague_priors().theta_prior,
            ..shared
        };
        wip_priors.validate()?;
        vague_priors.validate()?;

        let mut methods = if !args.method.is_empty() {
            args.method.clone()
        } else {
            file.method.clone().unwrap_or_else(|| vec![Method::Wip])
        };
        methods.sort();
        methods.dedup();

        let sampler = merge_sampler(&args.sampler, &file, SamplerConfig::default());
        sampler.validate()?;
        let mle_order = args.mle_order.or(file.mle_order).unwrap_or(bnhm::mle::DEFAULT_ORDER);
        if mle_order == 0 {
            bail!("--mle-order must be >= 1");
        }
        Ok(Self {
            dataset: args.dataset.clone(),
            methods,
            wip_priors,
            vague_priors,
            sampler,
            mle_order,
            output: OutputConfig::merge(&args.output, &file),
        })
    }

    pub fn priors(&self, method: Method) -> Option<PriorConfig> {
        match method {
            Method::Wip => Some(self.wip_priors),
            Method::Vague => Some(self.vague_priors),
            Method::Mle => None,
        }
    }
}

/// Merged configuration of `simulate`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateConfig {
    pub kind: GridKind,
    pub k: Vec<usize>,
    pub theta: Vec<f64>,
    pub replications: Option<usize>,
    pub methods: Vec<Method>,
    pub simulation: SimulationConfig,
    pub output: OutputConfig,
}

impl SimulateConfig {
    pub fn from_args(args: &SimulateArgs) -> Result<Self> {
        let file = load_file_config(args.output.config.as_deref())?;
        let mut methods: Vec<Method> = pick(&args.method, &file.method);
        if methods.is_empty() {
            methods = Method::ALL.to_vec();
        }
        methods.sort();
        methods.dedup();
        let replications = args.replications.or(file.replications);
        if replications == Some(0) {
            bail!("invalid override: --replications must be >= 1");
        }
        let base = SimulationConfig::default();
        let sampler = merge_sampler(&args.sampler, &file, base.sampler);
        sampler.validate()?;
        let mle_order = args.mle_order.or(file.mle_order).unwrap_or(base.mle_order);
        if mle_order == 0 {
            bail!("--mle-order must be >= 1");
        }
        Ok(Self {
            kind: args.kind.or(file.kind).unwrap_or(GridKind::Rare),
            k: pick(&args.k, &file.k),
            theta: pick(&args.theta, &file.theta),
            replications,
            methods,
            simulation: SimulationConfig { sampler, mle_order },
            output: OutputConfig::merge(&args.output, &file),
        })
    }
}

fn pick<T: Clone>(flag: &[T], file: &Option<Vec<T>>) -> Vec<T> {
    if flag.is_empty() {
        file.clone().unwrap_or_default()
    } else {
        flag.to_vec()
    }
}

pub fn output_config(args: &OutputArgs) -> Result<OutputConfig> {
    let file = load_file_config(args.config.as_deref())?;
    Ok(OutputConfig::merge(args, &file))
}
