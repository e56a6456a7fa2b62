//! Command-line front end: analysis of multi-machine power systems on the
//! Kron-reduced network. Summaries print to stderr, CSV artifacts to the
//! `--out` file or stdout. Exit codes: 0 success, 1 certificate verdict
//! false, 2 errors.

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use gridpass_cli::{commands, config};
use gridpass_core::linear::FreqGrid;
use gridpass_core::MachineKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gridpass",
    about = "Kron reduction, equilibria, strain-energy convexity and passivity-type \
             certificates for multi-machine power systems",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// System description file.
    config: PathBuf,
    /// Write the CSV artifact here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace the load model of every load row (classical or droop).
    #[arg(long, value_parser = parse_load_model)]
    load_model: Option<MachineKind>,
}

#[derive(Args)]
struct PointArgs {
    /// Second generator angle relative to the first \[rad\].
    #[arg(long, default_value_t = 0.0)]
    delta21: f64,
    /// Third generator angle relative to the first \[rad\].
    #[arg(long, default_value_t = 0.0)]
    delta31: f64,
    /// Gauge angle of the first generator \[rad\].
    #[arg(long, default_value_t = 0.0)]
    delta1: f64,
}

fn parse_load_model(s: &str) -> Result<MachineKind, String> {
    match s {
        "classical" => Ok(MachineKind::Classical),
        "droop" => Ok(MachineKind::Droop),
        other => Err(format!("unknown load model `{other}` (classical, droop)")),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the admittance matrix and Kron-reduce it; emit the reduced
    /// coupling matrices.
    Reduce {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Solve one feasible equilibrium; emit the machine states.
    Equilibrium {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Linearize the electromagnetic subsystem at an equilibrium; emit the
    /// system matrices.
    Linearize {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
    },
    /// Frequency-domain certificates (negative-imaginary / positive-real) at
    /// an equilibrium; exit 1 when a requested verdict is false.
    Certify {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
        /// Which property to certify: ni, pr or both.
        #[arg(long, default_value = "both")]
        property: String,
        /// Lowest grid frequency \[rad/s\].
        #[arg(long, default_value_t = 1e-3)]
        freq_min: f64,
        /// Highest grid frequency \[rad/s\].
        #[arg(long, default_value_t = 1e4)]
        freq_max: f64,
        /// Number of logarithmic grid points.
        #[arg(long, default_value_t = 400)]
        freq_points: usize,
    },
    /// Integrate the closed loop from a perturbed equilibrium; emit the
    /// sampled trajectory.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        point: PointArgs,
        /// Simulation horizon \[s\].
        #[arg(long, default_value_t = 10.0)]
        t_end: f64,
        /// Sample interval \[s\].
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Machine index to perturb.
        #[arg(long, default_value_t = 1)]
        perturb_machine: usize,
        /// Rotor-angle perturbation \[rad\].
        #[arg(long, default_value_t = 0.1)]
        perturb_delta: f64,
    },
    /// Classify every cell of the operating-point grid; emit one CSV row per
    /// cell.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the grid resolution from the config.
        #[arg(long)]
        grid: Option<usize>,
        /// Solve every cell from the nominal guess instead of continuing
        /// from neighbors.
        #[arg(long)]
        no_continuation: bool,
    },
}

fn load_config(common: &CommonArgs) -> Result<config::ConfigSpec> {
    let mut cfg = config::parse_file(&common.config)?;
    if let Some(kind) = common.load_model {
        cfg.coerce_loads(kind)?;
    }
    Ok(cfg)
}

fn run() -> Result<i32> {
    let cli = Cli::parse();
    match cli.command {
        Command::Reduce { common } => {
            let cfg = load_config(&common)?;
            commands::run_reduce(&cfg, &common.out)
        }
        Command::Equilibrium { common, point } => {
            let cfg = load_config(&common)?;
            commands::run_equilibrium(
                &cfg,
                point.delta1,
                point.delta21,
                point.delta31,
                &common.out,
            )
        }
        Command::Linearize { common, point } => {
            let cfg = load_config(&common)?;
            commands::run_linearize(
                &cfg,
                point.delta1,
                point.delta21,
                point.delta31,
                &common.out,
            )
        }
        Command::Certify {
            common,
            point,
            property,
            freq_min,
            freq_max,
            freq_points,
        } => {
            if !matches!(property.as_str(), "ni" | "pr" | "both") {
                anyhow::bail!("--property must be ni, pr or both");
            }
            let cfg = load_config(&common)?;
            let grid = FreqGrid {
                min: freq_min,
                max: freq_max,
                points: freq_points,
            };
            commands::run_certify(
                &cfg,
                point.delta1,
                point.delta21,
                point.delta31,
                &property,
                grid,
                &common.out,
            )
        }
        Command::Simulate {
            common,
            point,
            t_end,
            dt,
            perturb_machine,
            perturb_delta,
        } => {
            let cfg = load_config(&common)?;
            commands::run_simulate(
                &cfg,
                point.delta1,
                point.delta21,
                point.delta31,
                t_end,
                dt,
                perturb_machine,
                perturb_delta,
                &common.out,
            )
        }
        Command::Sweep {
            common,
            grid,
            no_continuation,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(res) = grid {
                cfg.sweep.resolution = res;
            }
            commands::run_sweep(&cfg, !no_continuation, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
