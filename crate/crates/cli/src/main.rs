//! `mepack`: construct, evolve and compare maximum-entropy packets.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical diagnostic
//! failure, 4 I/O error.

mod commands;
mod config;
mod output;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Arg, ArgAction, ArgMatches};

use config::{Command, RunConfig, COMMANDS};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
    Io(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical diagnostic failed: {m}"),
            CliError::Io(m) => write!(f, "I/O error: {m}"),
        }
    }
}

impl From<mepack_core::Error> for CliError {
    fn from(e: mepack_core::Error) -> Self {
        use mepack_core::Error as E;
        if e.is_numerical() || matches!(e, E::Coverage(_)) {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

fn cli() -> clap::Command {
    let mut root = clap::Command::new("mepack")
        .version(mepack_core::VERSION)
        .about("Maximum-entropy phase-space packets: construction, evolution, comparison")
        .after_help(
            "Values come from --config FILE (key = value lines) and are overridden by flags.\n\
             MEPACK_THREADS caps worker threads.\n\
             Exit codes: 0 ok, 2 configuration error, 3 numerical diagnostic failure, 4 I/O error.",
        )
        .subcommand_required(true)
        .arg_required_else_help(true);
    for c in &COMMANDS {
        let mut sub = clap::Command::new(c.name).about(c.about).arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .value_parser(clap::value_parser!(PathBuf))
                .help("key = value file; flags take precedence"),
        );
        for k in c.keys() {
            sub = sub.arg(
                Arg::new(k.name)
                    .long(k.name)
                    .value_name("VALUE")
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set)
                    .help(k.help),
            );
        }
        root = root.subcommand(sub);
    }
    root
}

fn resolve(command: &'static Command, m: &ArgMatches) -> Result<RunConfig, CliError> {
    let file = match m.get_one::<PathBuf>("config") {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
            config::parse_file(&text, path, command)?
        }
        None => BTreeMap::new(),
    };
    let flags =
        command.keys().filter_map(|k| m.get_one::<String>(k.name).map(|v| (k.name.to_string(), v.clone()))).collect();
    Ok(RunConfig::new(command.name, file, flags))
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MEPACK_THREADS") else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Config(format!("MEPACK_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))
}

fn run() -> Result<(), CliError> {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Command::find(name).expect("subcommands come from the table");
    configure_threads()?;
    let cfg = resolve(command, sub)?;
    commands::dispatch(&cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mepack: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_tree_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn keys_are_unique_per_command() {
        for c in &COMMANDS {
            let mut names: Vec<_> = c.keys().map(|k| k.name).collect();
            names.sort_unstable();
            let before = names.len();
            names.dedup();
            assert_eq!(before, names.len(), "{}", c.name);
        }
    }
}
