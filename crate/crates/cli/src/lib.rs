//! Batch front end for the experiment-design engine.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::io::Write;

use clap::{Parser, Subcommand};

pub use config::{Overrides, RunConfig, Suite};
pub use error::{CliError, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "oed", version, about = "Rank experiments by expected information gain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score and rank every experiment of a suite
    Rank(Overrides),
    /// EIG against number of participants for chosen experiments
    Curve(Overrides),
    /// List all admissible category structures as JSON lines
    Enumerate(Overrides),
    /// Actual information gain of empirical data
    Aig(Overrides),
    /// Echo the resolved configuration
    PrintConfig(Overrides),
}

pub fn run(command: &Command, stdout: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Rank(o) => commands::cmd_rank(o, stdout),
        Command::Curve(o) => commands::cmd_curve(o, stdout),
        Command::Enumerate(o) => commands::cmd_enumerate(o, stdout),
        Command::Aig(o) => commands::cmd_aig(o, stdout),
        Command::PrintConfig(o) => commands::cmd_print_config(o, stdout),
    }
}

/// Parses arguments, runs, and returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(text.as_bytes())
            } else {
                stderr.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match run(&cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}
