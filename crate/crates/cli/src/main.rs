//! `hsm`: command-line front end of the characterization toolkit.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hsm_core::model::Sector;
use hsm_core::report::ReportFormat;

/// Characterization of high-speed machining centers.
#[derive(Debug, Parser)]
#[command(name = "hsm", version, about)]
pub struct Cli {
    /// Defaults for sample period, smoothing, verdict thresholds and format
    /// (TOML, or JSON with a `.json` extension).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output file (output directory for `simulate`); stdout by default.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format: json or markdown.
    #[arg(long, global = true, value_name = "FORMAT")]
    pub format: Option<ReportFormat>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Vendor datasheet checks.
    #[command(subcommand)]
    Datasheet(DatasheetCommand),
    /// Simulate the standard trajectories of a machine.
    Simulate(SimulateArgs),
    /// Kinematic analysis of position traces.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Positioning accuracy and repeatability per axis.
    Positioning {
        /// CSV `axis,target_mm,direction,measured_mm`.
        file: PathBuf,
    },
    /// Circle or plane fitting on CMM points.
    #[command(subcommand)]
    Fit(FitCommand),
    /// Hole-pattern localization statistics.
    Localization {
        /// Combined CSV `hole_id,nominal_x_mm,nominal_y_mm,measured_x_mm,measured_y_mm`,
        /// or the nominal `hole_id,x_mm,y_mm` file when MEASURED is given.
        nominal: PathBuf,
        /// Measured `hole_id,x_mm,y_mm` file, paired with NOMINAL by row.
        measured: Option<PathBuf>,
    },
    /// Cycle time comparisons.
    #[command(subcommand)]
    Timing(TimingCommand),
    /// Full characterization report from a bundle manifest.
    Report {
        /// Bundle manifest (TOML).
        bundle: PathBuf,
        /// Leave out the generation timestamp.
        #[arg(long)]
        no_timestamp: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum DatasheetCommand {
    /// Validate and normalize a datasheet.
    Validate { file: PathBuf },
    /// Which sector criteria the datasheet documents.
    Gaps {
        file: PathBuf,
        /// Sector to check; all sectors when omitted.
        #[arg(long)]
        sector: Option<Sector>,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Machine datasheet holding the axis limits.
    #[arg(long)]
    pub machine: PathBuf,
    /// Protocol overrides (TOML, or JSON with a `.json` extension).
    #[arg(long)]
    pub protocol: Option<PathBuf>,
    /// Only these trajectory ids (repeatable); all by default.
    #[arg(long = "trajectory", value_name = "ID")]
    pub trajectories: Vec<String>,
    /// Sample period, s.
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Indicators of one trace.
    Trace {
        /// CSV `t_s,x_mm[,y_mm][,z_mm]`.
        file: PathBuf,
        /// Programmed feed, mm/min; enables the saturation analysis.
        #[arg(long)]
        commanded_feed: Option<f64>,
        /// Setpoint trace to compare the attained dynamics against.
        #[arg(long)]
        commanded: Option<PathBuf>,
        /// Savitzky-Golay window (odd); 1 disables smoothing.
        #[arg(long)]
        window: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FitCommand {
    /// Circularity of every feature in a CMM file.
    Circle {
        /// CSV `feature_id,x_mm,y_mm,z_mm`.
        file: PathBuf,
        /// Nominal center `x,y` in mm.
        #[arg(long, value_parser = parse_point, allow_hyphen_values = true, requires = "nominal_radius")]
        nominal_center: Option<[f64; 2]>,
        /// Nominal radius, mm.
        #[arg(long, requires = "nominal_center")]
        nominal_radius: Option<f64>,
    },
    /// Flatness of every feature in a CMM file.
    Plane {
        /// CSV `feature_id,x_mm,y_mm,z_mm`.
        file: PathBuf,
        /// Two feature ids whose perpendicularity is reported.
        #[arg(long, value_parser = parse_face_pair)]
        perpendicular: Option<[String; 2]>,
        /// Perpendicularity reference length, mm.
        #[arg(long)]
        length: Option<f64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TimingCommand {
    /// Pair air-cut and loaded times and decide on cutting influence.
    Compare {
        /// CSV `entity,context,duration_s[,label]`.
        file: PathBuf,
    },
}

fn split_pair(s: &str) -> Result<[&str; 2], String> {
    match s.split(',').collect::<Vec<_>>().as_slice() {
        [a, b] => Ok([a.trim(), b.trim()]),
        _ => Err(format!("expected two comma-separated values, got `{s}`")),
    }
}

fn parse_point(s: &str) -> Result<[f64; 2], String> {
    let [x, y] = split_pair(s)?;
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok([num(x)?, num(y)?])
}

fn parse_face_pair(s: &str) -> Result<[String; 2], String> {
    Ok(split_pair(s)?.map(str::to_string))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
