//! `tst`: dataset synthesis, training, inference, evaluation, tensor
//! visualization and gradient checking for the structure-tensor pipeline.

mod commands;
mod config;
mod predictions;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tst_core::Error;

const EXIT_CODES: &str = "Exit codes: 0 ok, 1 check failed, 2 usage or invalid input, 3 I/O, 4 numeric failure.\n\
Set TST_THREADS to cap the number of worker threads.";

#[derive(Parser, Debug)]
#[command(name = "tst", version, about = "Trainable structure-tensor threat segmentation", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic pseudo X-ray dataset.
    #[command(after_help = EXIT_CODES)]
    Synth(SynthArgs),
    /// Train the backbone on a dataset directory.
    #[command(after_help = EXIT_CODES)]
    Train(TrainArgs),
    /// Detect threat items in an image or a directory of images.
    #[command(after_help = EXIT_CODES)]
    Infer(InferArgs),
    /// Score prediction files against ground truth.
    #[command(after_help = EXIT_CODES)]
    Eval(EvalArgs),
    /// Write the coherent structure-tensor representation of an image.
    #[command(after_help = EXIT_CODES)]
    Tensor(TensorArgs),
    /// Compare backbone gradients with central finite differences.
    #[command(after_help = EXIT_CODES)]
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Number of scans
    #[arg(long)]
    pub n: usize,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Targeted fraction of each threat item overlapped by clutter
    #[arg(long, default_value_t = 0.0)]
    pub occlusion: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated threat templates (knife, gun, shuriken, razor)
    #[arg(long, default_value = "knife,gun,shuriken")]
    pub classes: String,
    /// Canvas side length in pixels
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Standard deviation of the additive noise
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    /// Share of scans in the training split
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
}

/// Pipeline and training options shared by `train` and `infer`. Unset flags
/// fall back to the config file, then to the built-in defaults.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    /// JSON run configuration (flags override it)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of gradient orientations [default: 4]
    #[arg(long)]
    pub m: Option<usize>,
    /// Number of fused tensors [default: 2]
    #[arg(long)]
    pub k: Option<usize>,
    /// Gaussian sigma of the tensor smoothing [default: 1]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Network input side length [default: 128]
    #[arg(long)]
    pub input_size: Option<usize>,
    /// Backbone input: tensor, luminance or tensor_luminance [default: tensor]
    #[arg(long)]
    pub input_mode: Option<String>,
    /// Opening radius of the post-processing [default: 1]
    #[arg(long)]
    pub open_radius: Option<usize>,
    /// Closing radius used before filling contours [default: 3]
    #[arg(long)]
    pub close_radius: Option<usize>,
    /// Smallest component kept, in pixels [default: 20]
    #[arg(long)]
    pub min_area: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset directory (images/, annotations/, masks/, manifest.json)
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the checkpoint, loss history and run config
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub pipeline: ConfigArgs,
    /// Training epochs [default: 50]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 8]
    #[arg(long)]
    pub batch: Option<usize>,
    /// Seed for initialization and shuffling [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated encoder channel counts [default: 16,32,64]
    #[arg(long)]
    pub stages: Option<String>,
    /// ADADELTA decay rate [default: 0.95]
    #[arg(long)]
    pub rho: Option<f64>,
    /// ADADELTA learning rate [default: 1.0]
    #[arg(long)]
    pub lr: Option<f64>,
    /// ADADELTA epsilon [default: 1e-6]
    #[arg(long)]
    pub eps: Option<f64>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    pub model: PathBuf,
    /// Image file or directory of images
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline options; `run_config.json` beside the model is used when no
    /// config file is given
    #[command(flatten)]
    pub pipeline: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Directory of prediction files written by `infer`
    #[arg(long)]
    pub pred: PathBuf,
    /// Ground-truth dataset directory
    #[arg(long)]
    pub gt: PathBuf,
    /// Box IoU needed for a match
    #[arg(long, default_value_t = 0.5)]
    pub iou: f64,
    /// Where to write the JSON report
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Where to write per-class precision-recall points as CSV
    #[arg(long)]
    pub pr: Option<PathBuf>,
    /// Which images to score: test, train or all
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Args, Debug)]
pub struct TensorArgs {
    /// Input image
    #[arg(long)]
    pub input: PathBuf,
    /// Output PNG
    #[arg(long)]
    pub out: PathBuf,
    /// Number of gradient orientations
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Number of fused tensors
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Gaussian sigma
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Initialization seed of the reference network
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidParameter(_) | Error::InvalidInput(_) | Error::InvalidConfig(_) => 2,
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::NonFinite(_) => 4,
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("TST_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Infer(a) => commands::infer(a),
        Command::Eval(a) => commands::eval(a),
        Command::Tensor(a) => commands::tensor(a),
        Command::Gradcheck(a) => commands::gradcheck(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
