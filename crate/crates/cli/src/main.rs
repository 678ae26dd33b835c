//! `bubblediag`: Metcalfe valuation, user growth, LPPLS fits and window
//! scans from a data directory, written as JSON reports and CSV tables.
//!
//! Exit statuses: 0 success, 2 usage or validation, 3 no analytic result,
//! 4 I/O failure. Errors are printed to stderr as one JSON object.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::*;
use error::{CliError, EXIT_USAGE};
use output::OutDir;

#[derive(Parser)]
#[command(name = "bubblediag", version, about = "Bubble diagnostics against a Metcalfe fundamental value")]
struct Cli {
    /// Directory holding users.csv and cap.csv (or price.csv and supply.csv).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for bootstrap and synthetic data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Format of tabular artifacts; reports are always JSON.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// bubble1..bubble5 (lppls, bubbles), 2012-start or 2010-start (usergrowth), fig5 (scan).
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Do not list written files.
    #[arg(long, global = true)]
    quiet: bool,
    /// TOML file with the same keys; flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generalized and constrained Metcalfe fits, rolling exponent, support lines, MMV ratio.
    Metcalfe(MetcalfeBlock),
    /// Saturating user-growth curve with projections.
    Usergrowth(UserGrowthBlock),
    /// LPPLS and power-law fits of one window with the profile interval for t_c.
    Lppls(LpplsBlock),
    /// Bootstrap accept/reject scan over candidate window starts.
    Scan(ScanBlock),
    /// Bubble statistics, rescaled bubbles and the fit of their average.
    Bubbles {
        #[arg(long, value_enum)]
        grid: Option<GridChoice>,
    },
}

fn run(cli: Cli) -> Result<(Vec<PathBuf>, bool), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let common = Common {
        data_dir: cli.data_dir.or(file.data_dir).unwrap_or_else(|| PathBuf::from(".")),
        out: cli.out.or(file.out).unwrap_or_else(|| PathBuf::from("out")),
        seed: cli.seed.or(file.seed).unwrap_or(0),
        format: cli.format.or(file.format).unwrap_or_default(),
        preset: cli.preset.or(file.preset),
        quiet: cli.quiet || file.quiet.unwrap_or(false),
    };
    let preset = common.preset.as_deref();

    // settings are resolved and validated before any data is read or output written
    match cli.command {
        Command::Metcalfe(flags) => {
            let s = MetcalfeSettings::resolve(flags, file.metcalfe)?;
            let mut out = OutDir::create(&common.out, common.format)?;
            commands::metcalfe(&common, &s, &mut out)?;
            Ok((out.written, common.quiet))
        }
        Command::Usergrowth(flags) => {
            let s = UserGrowthSettings::resolve(preset, flags, file.usergrowth)?;
            let mut out = OutDir::create(&common.out, common.format)?;
            commands::usergrowth(&common, &s, &mut out)?;
            Ok((out.written, common.quiet))
        }
        Command::Lppls(flags) => {
            let s = LpplsSettings::resolve(preset, flags, file.lppls)?;
            let mut out = OutDir::create(&common.out, common.format)?;
            commands::lppls(&common, &s, &mut out)?;
            Ok((out.written, common.quiet))
        }
        Command::Scan(flags) => {
            let s = ScanSettings::resolve(preset, flags, file.scan)?;
            let mut out = OutDir::create(&common.out, common.format)?;
            commands::scan(&common, &s, &mut out)?;
            Ok((out.written, common.quiet))
        }
        Command::Bubbles { grid } => {
            if let Some(name) = preset {
                bubble_preset(name)?;
            }
            let mut out = OutDir::create(&common.out, common.format)?;
            commands::bubbles(&common, grid.unwrap_or_default(), &mut out)?;
            Ok((out.written, common.quiet))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::usage("Usage", e.to_string().trim_end());
            eprintln!("{}", serde_json::to_string(&err).expect("error serializes"));
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    match run(cli) {
        Ok((written, quiet)) => {
            if !quiet {
                for path in written {
                    println!("wrote {}", path.display());
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("{}", serde_json::to_string(&err).expect("error serializes"));
            ExitCode::from(err.exit_status as u8)
        }
    }
}
