//! `qvar` command-line tool. Exit codes: 0 ok, 2 configuration or input
//! error, 3 numeric failure.

mod args;
mod manifest;
mod run;

use std::fs;
use std::io::Write;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use qvar::{Error, ErrorKind};

use args::{Cli, Command};
use manifest::RunManifest;

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("QVAR_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("QVAR_THREADS must be a positive integer, got '{value}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn resolve(command: Command) -> Result<Command, Error> {
    let Command::Replay(r) = command else {
        return Ok(command);
    };
    let text = fs::read_to_string(&r.manifest)?;
    let recorded: RunManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("manifest {}: {e}", r.manifest.display())))?;
    let mut command = recorded.command;
    if let (Some(out), Some(o)) = (r.out, command.output_mut()) {
        o.out = Some(out);
        o.manifest = None;
    }
    Ok(command)
}

fn run(command: Command) -> Result<(), Error> {
    let mut command = resolve(command)?;
    let start = Instant::now();
    let outcome = run::execute(&command)?;
    let wall_time_s = start.elapsed().as_secs_f64();

    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    let output = command
        .output_mut()
        .cloned()
        .expect("resolved commands have outputs");
    match &output.out {
        Some(path) => fs::write(path, &outcome.body)?,
        None => std::io::stdout().write_all(&outcome.body)?,
    }
    let manifest = RunManifest {
        seed: outcome.seed.or(command.seed()),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        wall_time_s,
        warnings: outcome.warnings,
        output: output.out.clone(),
        command,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    match (&output.manifest, &output.out) {
        (Some(path), _) => fs::write(path, text + "\n")?,
        (None, Some(out)) => fs::write(RunManifest::default_path(out), text + "\n")?,
        (None, None) => eprintln!("manifest: {}", serde_json::to_string(&manifest)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.kind() {
                ErrorKind::Numeric => EXIT_NUMERIC,
                ErrorKind::Config => EXIT_CONFIG,
            })
        }
    }
}
