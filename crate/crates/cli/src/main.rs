use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use otcal_cli::{run, Command, RunConfig};

#[derive(Parser)]
#[command(name = "otcal", version, about = "Verify calibrated geometry of optimal transport maps")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Graph checks for one map: spacelike, Lagrangian, pushforward, calibration, mean curvature.
    VerifyMap(Opts),
    /// Numerical comass of the calibration form.
    Comass(Opts),
    /// Mass of the optimal graph against competitor maps.
    MassCompare(Opts),
    /// MTW signs and the conformal curvature identity.
    Curvature(Opts),
    /// The full verification battery.
    Suite(Opts),
}

#[derive(clap::Args)]
struct Opts {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cells per axis of the verification grid.
    #[arg(long)]
    grid: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::VerifyMap(o) => (Command::VerifyMap, o),
        Cmd::Comass(o) => (Command::Comass, o),
        Cmd::MassCompare(o) => (Command::MassCompare, o),
        Cmd::Curvature(o) => (Command::Curvature, o),
        Cmd::Suite(o) => (Command::Suite, o),
    };
    let mut cfg = match RunConfig::load(&opts.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(out) = opts.out {
        cfg.out = out;
    }
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    match opts.grid {
        Some(0) => {
            eprintln!("config error: --grid must be positive");
            return ExitCode::from(2);
        }
        Some(g) => cfg.grid = g,
        None => {}
    }
    let report = match run(command, &cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = report.write(&cfg.out) {
        eprintln!("cannot write report to {}: {e}", cfg.out.display());
        return ExitCode::from(2);
    }
    for r in &report.records {
        println!(
            "{} {}: {:.3e} (tolerance {:.1e}) [{}] {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.value,
            r.tolerance,
            r.anchor,
            r.detail
        );
    }
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        eprintln!("failing checks: {}", report.failing().join(", "));
        ExitCode::from(1)
    }
}
