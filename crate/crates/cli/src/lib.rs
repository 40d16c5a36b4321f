//! Configuration-driven verification runs over `otcal`: each command builds a
//! [`VerificationReport`] and writes it as `report.json` plus CSV tables.

pub mod commands;
pub mod config;
pub mod report;
pub mod suite;

pub use commands::{check_rng, cmd_comass, cmd_curvature, cmd_mass_compare, cmd_verify_map};
pub use config::{ConfigError, RunConfig};
pub use report::{Record, Table, VerificationReport};
pub use suite::cmd_suite;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    VerifyMap,
    Comass,
    MassCompare,
    Curvature,
    Suite,
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<VerificationReport, ConfigError> {
    match command {
        Command::VerifyMap => cmd_verify_map(cfg),
        Command::Comass => cmd_comass(cfg),
        Command::MassCompare => cmd_mass_compare(cfg),
        Command::Curvature => cmd_curvature(cfg),
        Command::Suite => Ok(cmd_suite(cfg)),
    }
}
