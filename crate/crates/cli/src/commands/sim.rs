use anyhow::Context;
use staplegrid_core::sim::{
    parse_fault, parse_script, replay_attack_scenario, run_scenario, run_script, ReplayConfig,
    ScenarioConfig,
};

use super::read;
use crate::args::SimCommand;

pub fn run(cmd: SimCommand) -> anyhow::Result<()> {
    match cmd {
        SimCommand::Run {
            script: Some(path),
            ..
        } => {
            let text = String::from_utf8(read(&path)?).context("script is not UTF-8")?;
            let report = run_script(&parse_script(&text)?)?;
            for line in &report.transcript {
                println!("{line}");
            }
            print!("{}", report.stats.table());
            println!("{}", report.stats);
        }
        SimCommand::Run {
            script: None,
            mode,
            clients,
            certs,
            seed,
            fault,
        } => {
            let mut config = ScenarioConfig::new(clients, mode);
            config.distinct_certs = certs.unwrap_or(clients);
            config.seed = seed;
            config.faults = fault
                .iter()
                .map(|f| parse_fault(f).map_err(anyhow::Error::msg))
                .collect::<Result<_, _>>()?;
            let stats = run_scenario(&config)?;
            print!("{}", stats.table());
            println!("{stats}");
        }
        SimCommand::Replay { advance, tamper, seed } => {
            let outcome = replay_attack_scenario(&ReplayConfig { seed, advance, tamper })?;
            println!(
                "replay after {}s{}: {}",
                advance.num_seconds(),
                if tamper { " (tampered)" } else { "" },
                outcome.verdict
            );
        }
    }
    Ok(())
}
