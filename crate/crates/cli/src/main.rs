//! Command-line driver for the kicked-beam toolkit.
//!
//! Grammar: `kickbeam <subcommand> --config <path> [--set key=value ...]
//! --out <dir>`. Every successful run ends by writing `manifest.json`
//! (config echo, artifact list, version, timing) into the output
//! directory; on failure all partially produced artifacts are removed and
//! the exit status is nonzero.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::Config;
use output::OutDir;

#[derive(Parser)]
#[command(
    name = "kickbeam",
    version,
    about = "Simulation, bifurcation sweeps, and POD/energy-closure reduced models \
             of a magnetically kicked cantilever"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat key=value configuration file (defaults apply when omitted).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override one configuration key, e.g. --set params.f=12.6.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    /// Directory receiving the artifacts and the run manifest.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the modal bases (characteristic roots, frequencies, tips).
    Modes,
    /// Integrate the full-order hybrid system and record field snapshots.
    Simulate,
    /// Continuation sweep of steady states over the kick strength.
    Bifurcate,
    /// Proper orthogonal decomposition of a snapshot directory.
    Pod,
    /// Energy-closure dimension selection for a basis/snapshot pair.
    Closure,
    /// Assemble a reduced-order model package from a basis.
    RomBuild,
    /// Integrate a reduced-order model package.
    RomSim,
    /// RMS errors, phase traces, and spectra of two snapshot records.
    Compare,
    /// Pairwise principal angles between stored bases.
    Angles,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Modes => "modes",
            Command::Simulate => "simulate",
            Command::Bifurcate => "bifurcate",
            Command::Pod => "pod",
            Command::Closure => "closure",
            Command::RomBuild => "rom-build",
            Command::RomSim => "rom-sim",
            Command::Compare => "compare",
            Command::Angles => "angles",
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut config = Config::load(cli.config.as_deref())?;
    config.apply_overrides(&cli.set)?;
    config.validate_keys()?;

    let mut out = OutDir::create(&cli.out)?;
    let result = match cli.command {
        Command::Modes => commands::modes(&config, &mut out),
        Command::Simulate => commands::run_simulate(&config, &mut out),
        Command::Bifurcate => commands::bifurcate(&config, &mut out),
        Command::Pod => commands::run_pod(&config, &mut out),
        Command::Closure => commands::run_closure(&config, &mut out),
        Command::RomBuild => commands::rom_build(&config, &mut out),
        Command::RomSim => commands::rom_sim(&config, &mut out),
        Command::Compare => commands::compare(&config, &mut out),
        Command::Angles => commands::angles(&config, &mut out),
    };
    match result {
        Ok(()) => out.finish(cli.command.name(), config.echo()),
        Err(e) => {
            out.cleanup();
            Err(e)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
