//! `gcanet`: train, run and evaluate the segmentation network from the shell.

mod commands;
mod format;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gcanet::data::ElementType;
use gcanet::nn::Preset;

/// Exit status for invalid invocations and configuration.
const EXIT_USAGE: u8 = 1;
/// Exit status for unreadable, malformed or inconsistent data.
const EXIT_DATA: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "gcanet",
    version,
    about = "Anisotropic 3D segmentation with global-convolution blocks and adversarial training"
)]
struct Cli {
    /// Worker threads for the numeric kernels (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on a directory of NAME.mhd / NAME_segmentation.mhd pairs.
    Train(TrainArgs),
    /// Segment one volume with a trained checkpoint.
    Infer(InferArgs),
    /// Compare a predicted mask with ground truth.
    Eval(EvalArgs),
    /// Write a synthetic labelled dataset.
    Phantom(PhantomArgs),
    /// Re-write a MetaImage volume, optionally changing its element type or spacing.
    Convert(ConvertArgs),
    /// Print parameter and convolution-layer counts.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override one configuration key (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    preset: Option<Preset>,
    /// Continue from this checkpoint instead of fresh weights.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Hold out this cross-validation fold (0-based).
    #[arg(long, requires = "folds")]
    fold: Option<usize>,
    /// Number of cross-validation folds.
    #[arg(long, requires = "fold")]
    folds: Option<usize>,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long = "in")]
    input: PathBuf,
    /// Binary mask output (MET_UCHAR).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Also write the foreground probability map (MET_FLOAT).
    #[arg(long)]
    prob_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Also write the report as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Treat low z as superior when splitting base and apex.
    #[arg(long)]
    superior_low_z: bool,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: usize,
    #[arg(long)]
    out: PathBuf,
    /// Extents as Z,Y,X.
    #[arg(long, default_value = "32,96,96", value_parser = format::parse_triple::<usize>)]
    extents: [usize; 3],
    /// Spacing in mm as X,Y,Z.
    #[arg(long, default_value = "1,1,1.5", value_parser = format::parse_triple::<f64>)]
    spacing: [f64; 3],
}

#[derive(Debug, Args)]
struct ConvertArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Output element type (MET_UCHAR, MET_SHORT, MET_USHORT or MET_FLOAT).
    #[arg(long = "type", default_value = "MET_FLOAT")]
    element_type: ElementType,
    /// Round values to the nearest integer before an integer cast.
    #[arg(long)]
    round: bool,
    /// Resample to this spacing in mm, X,Y,Z.
    #[arg(long, value_parser = format::parse_triple::<f64>)]
    resample: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    checkpoint: Option<PathBuf>,
    /// Inspect a freshly built architecture instead of a checkpoint.
    #[arg(long)]
    preset: Option<Preset>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    let outcome = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Phantom(a) => commands::phantom(a),
        Command::Convert(a) => commands::convert(a),
        Command::Inspect(a) => commands::inspect(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage() { EXIT_USAGE } else { EXIT_DATA })
        }
    }
}
