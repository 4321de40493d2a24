use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "ambidec", version, about = "Design and analyse two-band Ambisonic decoders")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Optimize a two-band decoder for an array and signal set.
    Design(DesignArgs),
    /// Write per-direction metrics and heatmaps for a decoder file.
    Evaluate(EvaluateArgs),
    /// Rank two decoders for the same array criterion by criterion.
    Compare(CompareArgs),
    /// Rendered direction of sources moving along lines of constant azimuth
    /// and elevation.
    PanGrid(PanGridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StartArg {
    Allrad,
    Pinv,
    Random,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormalizationArg {
    N3d,
    Sn3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum BandArg {
    /// Pressure and rV from the LF matrix, energy and rE from the HF matrix.
    #[default]
    TwoBand,
    Lf,
    Hf,
}

#[derive(Debug, Clone, Args)]
pub struct DesignArgs {
    /// Array configuration (JSON).
    #[arg(long)]
    pub array: PathBuf,
    /// Signal set, e.g. 3H2V or 3.
    #[arg(long)]
    pub set: String,
    /// Design configuration (JSON); flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Grid the objectives are evaluated on.
    #[arg(long)]
    pub grid: Option<String>,
    /// Spherical design used for the goal field.
    #[arg(long)]
    pub goal_grid: Option<String>,
    #[arg(long, value_enum)]
    pub x0: Option<StartArg>,
    /// Decoder file whose HF matrix starts the optimization (with --x0 file).
    #[arg(long)]
    pub x0_file: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Objective weights as key=value; prefix with hf. or lf. for one band.
    #[arg(long, value_delimiter = ',')]
    pub weights: Vec<String>,
    /// Sparseness weight for both bands.
    #[arg(long)]
    pub sparseness_penalty: Option<f64>,
    /// Bound on the magnitude of matrix entries.
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Imaginary speakers for the AllRAD start: none, nadir, nadir+zenith.
    #[arg(long)]
    pub imaginary: Option<String>,
    #[arg(long)]
    pub crossover_hz: Option<f64>,
    /// Normalization of the exported matrices.
    #[arg(long, value_enum, default_value = "n3d")]
    pub normalization: NormalizationArg,
    /// Decoder file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Design report path; defaults to the output path with `.report.txt`.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write evaluation heatmaps here.
    #[arg(long)]
    pub plots_dir: Option<PathBuf>,
    #[command(flatten)]
    pub map: MapArgs,
}

#[derive(Debug, Clone, Copy, Args)]
pub struct MapArgs {
    /// Heatmap sample spacing in degrees.
    #[arg(long, default_value_t = 2.0)]
    pub map_step: f64,
    /// Pixels per heatmap sample along each axis.
    #[arg(long, default_value_t = 4)]
    pub pixel_scale: u32,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub decoder: PathBuf,
    /// Array configuration the decoder must match.
    #[arg(long)]
    pub array: Option<PathBuf>,
    #[arg(long, default_value = "design-5200")]
    pub grid: String,
    #[arg(long, value_enum, default_value_t = BandArg::TwoBand)]
    pub band: BandArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Metrics CSV to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub plots_dir: Option<PathBuf>,
    #[command(flatten)]
    pub map: MapArgs,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    pub a: PathBuf,
    pub b: PathBuf,
    #[arg(long, default_value = "design-5200")]
    pub grid: String,
    #[arg(long, value_enum, default_value_t = BandArg::TwoBand)]
    pub band: BandArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Machine-readable comparison to write.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PanGridArgs {
    #[arg(long)]
    pub decoder: PathBuf,
    /// Azimuths (degrees) of full meridian sweeps through both poles.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0,45,90,135")]
    pub az_lines: Vec<f64>,
    /// Elevations (degrees) of full azimuth sweeps.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "-30,0,30,60")]
    pub el_lines: Vec<f64>,
    /// Spacing of points along each line, in degrees.
    #[arg(long, default_value_t = 1.0)]
    pub step: f64,
    /// hf follows rE, lf follows rV.
    #[arg(long, value_enum, default_value_t = PanBand::Hf)]
    pub band: PanBand,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PanBand {
    Lf,
    Hf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: &Command) -> CliResult<()> {
    match cmd {
        Command::Design(a) => commands::design::run(a).map(|_| ()),
        Command::Evaluate(a) => commands::evaluate::run(a).map(|_| ()),
        Command::Compare(a) => commands::compare::run(a).map(|_| ()),
        Command::PanGrid(a) => commands::pan_grid::run(a).map(|_| ()),
    }
}

pub(crate) fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}
