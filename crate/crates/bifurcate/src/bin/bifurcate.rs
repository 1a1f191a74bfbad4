//! Command-line front end for the gradient-flow bifurcation pipeline.
//!
//! Exit codes: 0 success, 1 error, 2 validator rule violations.

use anyhow::Result;
use bifurcate::cli_report::{self, Subcommand};
use clap::{Parser, Subcommand as ClapSubcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "bifurcate",
    about = "Critical points, caustics, separatrix splitting and bifurcation diagrams of planar gradient flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(ClapSubcommand)]
enum Command {
    /// Trace the caustic: caustic.csv plus figure
    Caustic(CommonArgs),
    /// Classify critical points over a region grid: critical_points.csv
    Critpts(CommonArgs),
    /// Phase portrait at one parameter point: portrait.json plus figure
    Portrait {
        #[command(flatten)]
        common: CommonArgs,
        /// Parameter point `x1,x2`
        #[arg(long, value_name = "X1,X2")]
        x: Option<String>,
    },
    /// Sample the splitting function on a circle: scan.csv, scan_zeros.csv
    Scan {
        #[command(flatten)]
        common: CommonArgs,
        /// Circle radius
        #[arg(long, value_name = "R")]
        r: Option<f64>,
    },
    /// Compute the bifurcation diagram: branches.csv, diagram.json, figure
    Locus(CommonArgs),
    /// Check diagram.json against the combinatorial rules
    Validate(CommonArgs),
    /// Run the whole pipeline and write an index document
    Report(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Run configuration file (key = value lines)
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's output directory
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

fn dispatch() -> Result<i32> {
    let cli = Cli::parse();
    let (sub, common, x, r) = match &cli.command {
        Command::Caustic(c) => (Subcommand::Caustic, c, None, None),
        Command::Critpts(c) => (Subcommand::Critpts, c, None, None),
        Command::Portrait { common, x } => (Subcommand::Portrait, common, x.clone(), None),
        Command::Scan { common, r } => (Subcommand::Scan, common, None, *r),
        Command::Locus(c) => (Subcommand::Locus, c, None, None),
        Command::Validate(c) => (Subcommand::Validate, c, None, None),
        Command::Report(c) => (Subcommand::Report, c, None, None),
    };
    let mut config = cli_report::load_config(&common.config)?;
    if let Some(dir) = &common.out {
        config.out_dir = dir.clone();
    }
    if let Some(xs) = x {
        let parts: Vec<&str> = xs.split(',').map(str::trim).collect();
        anyhow::ensure!(parts.len() == 2, "--x needs `x1,x2`, got `{xs}`");
        config.portrait_x = bifurcate::ParameterPoint::new(parts[0].parse()?, parts[1].parse()?);
    }
    if let Some(radius) = r {
        anyhow::ensure!(radius > 0.0, "--r must be positive");
        config.scan_r = radius;
    }
    cli_report::run(sub, &config)
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
