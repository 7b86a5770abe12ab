use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use excess_noise_cli::config::{load_config_with, Mode, Overrides};
use excess_noise_cli::runner::{
    config_exit_code, dry_run, exit, run_scenario, RunError, RunOptions, EXIT_CODES_HELP,
};

/// Quasi modes, moment dynamics, Monte-Carlo noise and paraxial propagation
/// for linearly amplified multimode fields.
#[derive(Parser)]
#[command(name = "excess-noise", version, after_help = EXIT_CODES_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quasi-mode table: frequencies, rates, K (coefficient and integral form)
    Quasimodes(Common),
    /// Exact second moments from the vacuum as a time series
    Moments(Common),
    /// Monte-Carlo noise growth with the fitted K
    Simulate(Common),
    /// Split-step propagation and transverse quasi modes
    Paraxial(Common),
    /// Check a scenario file and report its quasi modes without writing files
    Validate(Common),
}

#[derive(Args)]
#[command(after_help = EXIT_CODES_HELP)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory
    #[arg(long, env = "EXCESS_NOISE_OUT")]
    out: Option<PathBuf>,
    /// Overwrite existing outputs
    #[arg(long)]
    force: bool,
    /// Override run.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for Monte-Carlo (default: all cores)
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, common) = match &cli.command {
        Command::Quasimodes(c) => (Some(Mode::Quasimodes), c),
        Command::Moments(c) => (Some(Mode::Moments), c),
        Command::Simulate(c) => (Some(Mode::Simulate), c),
        Command::Paraxial(c) => (Some(Mode::Paraxial), c),
        Command::Validate(c) => (None, c),
    };
    if let Some(n) = common.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
        {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(exit::USAGE);
        }
    }
    let overrides = Overrides {
        mode,
        seed: common.seed,
        directory: common.out.clone(),
    };
    let config = match load_config_with(&common.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(config_exit_code(&e));
        }
    };

    if mode.is_none() {
        return match dry_run(&config) {
            Ok(notes) => {
                for n in notes {
                    println!("{n}");
                }
                println!(
                    "{} scenario {} is valid",
                    config.mode,
                    excess_noise_cli::scenario_hash(&config)
                );
                ExitCode::SUCCESS
            }
            Err(e) => report_error(&e),
        };
    }

    match run_scenario(
        &config,
        &RunOptions {
            force: common.force,
        },
    ) {
        Ok(report) => {
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &RunError) -> ExitCode {
    if let RunError::Degenerate { report, .. } = e {
        for n in &report.warnings {
            eprintln!("{n}");
        }
        for f in &report.files {
            println!("{}", f.display());
        }
    }
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}
