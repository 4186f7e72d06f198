#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::ScenarioKind;

#[derive(Parser, Debug)]
#[command(name = "psv", version, about = "Hybrid photosensor / video eye-tracking simulator")]
struct Cli {
    /// TOML configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 1 runs everything sequentially, 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render one frame as a binary PGM with a ground-truth sidecar.
    Render(RenderArgs),
    /// Dense scan of eye and sensor positions (resumable).
    Scan(ScanArgs),
    /// Fit the calibration model and write it to the output directory.
    Calibrate(CalibrateArgs),
    /// Run a scenario or the shift grid through the calibrated pipeline.
    Run(RunArgs),
    /// Configuration utilities.
    Config(ConfigArgs),
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// degrees
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta_h: f64,
    /// degrees
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    theta_v: f64,
    /// mm
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    dx: f64,
    /// mm
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    dy: f64,
    /// Use the VOG camera instead of the photosensor scene.
    #[arg(long)]
    vog: bool,
    /// Base file name inside the output directory.
    #[arg(long, default_value = "frame")]
    name: String,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// Full cross product instead of axis-aligned slices.
    #[arg(long)]
    full: bool,
}

#[derive(Args, Debug, Clone, Copy)]
struct FidelityArgs {
    /// Interpolate PSOG samples from the scan table (default).
    #[arg(long, conflicts_with = "exact")]
    fast: bool,
    /// Render every PSOG sample.
    #[arg(long)]
    exact: bool,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    #[command(flatten)]
    fidelity: FidelityArgs,
    /// Use VOG-estimated sensor positions instead of the nominal ones.
    #[arg(long)]
    auto: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Traditional,
    Corrected,
    Both,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    fidelity: FidelityArgs,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioKind>,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Accuracy-vs-shift sweep instead of a single scenario.
    #[arg(long)]
    shift_grid: bool,
    /// Calibration model; defaults to `model.txt` in the output directory.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Print the built-in defaults as TOML.
    #[arg(long)]
    print_defaults: bool,
    /// Print the effective configuration (defaults merged with --config).
    #[arg(long)]
    show: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
