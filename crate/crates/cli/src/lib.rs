//! Command-line front end of the `fgbif` toolkit: layered run
//! configuration, subcommand drivers and CSV/JSON output.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod regions;

pub use commands::Outcome;
pub use config::RunConfig;
pub use error::{CliError, CliResult};

/// The subcommands of the `fgbif` binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Equilibria,
    Branch,
    Cycles,
    TwoParam,
    Scenario,
    Analytic,
}

/// Runs one command and writes the configuration echo next to its outputs.
pub fn run(command: Command, cfg: &RunConfig) -> CliResult<Outcome> {
    let echo = commands::write_config_echo(cfg)?;
    let mut outcome = match command {
        Command::Simulate => commands::cmd_simulate(cfg),
        Command::Equilibria => commands::cmd_equilibria(cfg),
        Command::Branch => commands::cmd_branch(cfg),
        Command::Cycles => commands::cmd_cycles(cfg),
        Command::TwoParam => commands::cmd_two_param(cfg),
        Command::Scenario => commands::cmd_scenario(cfg),
        Command::Analytic => commands::cmd_analytic(cfg),
    }?;
    outcome.files.insert(0, echo);
    Ok(outcome)
}
