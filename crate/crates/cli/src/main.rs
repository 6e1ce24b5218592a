mod args;
mod commands;
mod error;
mod output;

use std::path::Path;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::parser::ValueSource;
use clap::{ArgMatches, Args, CommandFactory, FromArgMatches};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use args::{Cli, Command};
use error::{CliError, EXIT_USAGE};

const THREADS_ENV: &str = "EOC_LAB_THREADS";

fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot size thread pool: {e}")))
}

/// Loads a subcommand's arguments from JSON, taking the flag defaults for
/// any key the file leaves out.
fn from_config<T>(name: &'static str, path: &Path) -> Result<T, CliError>
where
    T: Args + FromArgMatches + Serialize + DeserializeOwned,
{
    let defaults_cmd = T::augment_args(clap::Command::new(name));
    let defaults = defaults_cmd
        .try_get_matches_from([name])
        .and_then(|m| T::from_arg_matches(&m))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let Value::Object(mut merged) = serde_json::to_value(&defaults).map_err(|e| CliError::Usage(e.to_string()))? else {
        unreachable!("argument structs serialize to objects");
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(Some(path), e))?;
    let Value::Object(given) =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
    else {
        return Err(CliError::Usage(format!("{}: expected a JSON object", path.display())));
    };
    for (key, value) in given {
        if !merged.contains_key(&key) {
            return Err(CliError::Usage(format!("{}: unknown key '{key}' for {name}", path.display())));
        }
        merged.insert(key, value);
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn reject_mixed_flags(name: &str, sub: &ArgMatches) -> Result<(), CliError> {
    let cmd = Cli::command();
    let Some(sub_cmd) = cmd.find_subcommand(name) else {
        return Ok(());
    };
    let explicit: Vec<String> = sub_cmd
        .get_arguments()
        .map(|a| a.get_id())
        .filter(|id| !matches!(id.as_str(), "config" | "out"))
        .filter(|id| sub.value_source(id.as_str()) == Some(ValueSource::CommandLine))
        .map(|id| id.to_string())
        .collect();
    if explicit.is_empty() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--config cannot be combined with other flags ({})",
            explicit.join(", ")
        )))
    }
}

fn run(cli: Cli, matches: &ArgMatches) -> Result<(), CliError> {
    configure_threads()?;
    let out = cli.out.as_deref();
    if let Some(path) = &cli.config {
        if let Some((name, sub)) = matches.subcommand() {
            reject_mixed_flags(name, sub)?;
        }
        return match cli.command {
            Command::Solve(_) => commands::solve(&from_config("solve", path)?, out),
            Command::Sweep(_) => commands::sweep(&from_config("sweep", path)?, out),
            Command::FixedPoints(_) => commands::fixed_points(&from_config("fixed-points", path)?, out),
            Command::Nlo(_) => commands::nlo(&from_config("nlo", path)?, out),
            Command::Simulate(_) => commands::simulate(&from_config("simulate", path)?, out),
            Command::Correlate(_) => commands::correlate(&from_config("correlate", path)?, out),
            Command::Jacobian(_) => commands::jacobian(&from_config("jacobian", path)?, out),
            Command::Train(_) => commands::train(&from_config("train", path)?, out),
        };
    }
    match &cli.command {
        Command::Solve(a) => commands::solve(a, out),
        Command::Sweep(a) => commands::sweep(a, out),
        Command::FixedPoints(a) => commands::fixed_points(a, out),
        Command::Nlo(a) => commands::nlo(a, out),
        Command::Simulate(a) => commands::simulate(a, out),
        Command::Correlate(a) => commands::correlate(a, out),
        Command::Jacobian(a) => commands::jacobian(a, out),
        Command::Train(a) => commands::train(a, out),
    }
}

fn main() -> ExitCode {
    let parsed = Cli::command()
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m).map(|cli| (cli, m)));
    let (cli, matches) = match parsed {
        Ok(p) => p,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE as u8),
            };
        }
    };
    match run(cli, &matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string_pretty(&e.to_json()).unwrap_or_default());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
