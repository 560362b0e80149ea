use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fgbif_cli::{run, CliError, CliResult, Command, RunConfig};

/// Continuation and bifurcation analysis of the forest-grassland model.
#[derive(Debug, Parser)]
#[command(name = "fgbif", version)]
struct Cli {
    /// Configuration file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Table format (overrides `output.format`).
    #[arg(long, global = true, value_parser = ["csv", "json", "both"])]
    format: Option<String>,

    /// Bundled preset applied before the configuration file.
    #[arg(long = "seed-preset", global = true, value_name = "NAME")]
    seed_preset: Option<String>,

    /// Single override applied last, e.g. `--set model.k=4.7`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Integrate from `sim.f0, sim.x0` and classify the attractor.
    Simulate,
    /// Tabulate all equilibria with eigenvalues and stability.
    Equilibria,
    /// Continue equilibrium families and tabulate their bifurcations.
    Branch,
    /// Continue limit cycles from a Hopf point.
    Cycles,
    /// Continue fold, Hopf and LPC loci in two parameters.
    TwoParam,
    /// Integrate with the perturbations of `scenario.events`.
    Scenario,
    /// Report the closed-form quantities of the model.
    Analytic,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Simulate => Command::Simulate,
            Sub::Equilibria => Command::Equilibria,
            Sub::Branch => Command::Branch,
            Sub::Cycles => Command::Cycles,
            Sub::TwoParam => Command::TwoParam,
            Sub::Scenario => Command::Scenario,
            Sub::Analytic => Command::Analytic,
        }
    }
}

fn configure(cli: &Cli) -> CliResult<RunConfig> {
    let file = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
            Some((path.display().to_string(), text))
        }
        None => None,
    };
    let mut overrides = cli.set.clone();
    if let Some(dir) = &cli.out {
        overrides.push(format!("output.dir={}", dir.display()));
    }
    if let Some(format) = &cli.format {
        overrides.push(format!("output.format={format}"));
    }
    RunConfig::assemble(
        cli.seed_preset.as_deref(),
        file.as_ref().map(|(origin, text)| (origin.as_str(), text.as_str())),
        &overrides,
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure(&cli).and_then(|cfg| run(cli.command.into(), &cfg));
    match result {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
