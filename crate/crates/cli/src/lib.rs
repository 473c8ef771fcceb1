//! Command-line front end for `bnhm`: dataset ingestion, configuration and
//! the `fit`, `simulate`, `forest` and `wip-sigma` commands.

pub mod commands;
pub mod config;
pub mod dataset;

use anyhow::{Context, Result};
use config::{Cli, Command, FitConfig, OutputConfig, SimulateConfig};

fn emit(text: &str, out: &OutputConfig) -> Result<()> {
    match &out.path {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display())),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
            Ok(())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(args) => {
            let cfg = FitConfig::from_args(&args)?;
            let report = commands::fit(&cfg)?;
            emit(&commands::render_fit(&report, cfg.output.format)?, &cfg.output)
        }
        Command::Simulate(args) => {
            let cfg = SimulateConfig::from_args(&args)?;
            let out = commands::simulate(&cfg)?;
            emit(&commands::render_simulation(&out, cfg.output.format)?, &cfg.output)
        }
        Command::Forest(args) => {
            let out = config::output_config(&args.output)?;
            let rows = commands::forest(&args.dataset)?;
            emit(&commands::render_forest(&rows, out.format)?, &out)
        }
        Command::WipSigma(args) => {
            let out = config::output_config(&args.output)?;
            let w = commands::wip_sigma(args.delta)?;
            emit(&commands::render_wip_sigma(&w, out.format)?, &out)
        }
    }
}
