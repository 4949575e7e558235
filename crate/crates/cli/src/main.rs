mod args;
mod commands;

use std::path::Path;
use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

/// Loads `key = value` lines as `STAPLEGRID_<KEY>` variables that are not
/// already set, so flags beat the environment and the environment beats the
/// file.
fn preload_config(path: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("config {}: {e}", path.display()))?;
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("config {} line {}: expected key = value", path.display(), n + 1))?;
        let var = format!("STAPLEGRID_{}", k.trim().to_ascii_uppercase());
        if std::env::var_os(&var).is_none() {
            std::env::set_var(var, v.trim());
        }
    }
    Ok(())
}

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    std::env::var("STAPLEGRID_CONFIG").ok()
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    if let Some(path) = config_path(&argv) {
        if let Err(e) = preload_config(Path::new(&path)) {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    }
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into()))
        .init();

    let result = match cli.command {
        Command::Ca(c) => commands::ca::run(c),
        Command::Responder(c) => commands::responder::run(c),
        Command::Cache(c) => commands::cache::run(c),
        Command::Sc(c) => commands::sc::run(c),
        Command::Sim(c) => commands::sim::run(c),
        Command::Bench(c) => commands::bench::run(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
