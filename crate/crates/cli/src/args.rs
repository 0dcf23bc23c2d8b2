use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "synthprint",
    version,
    about = "Fingerprint analysis, laundering and detector evaluation for synthetic images",
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Seed for every randomized step
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to all cores)
    #[arg(long, global = true, env = "SYNTHPRINT_THREADS")]
    pub threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,

    /// JSON file with default flag values (command-line flags take precedence)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LogLevel {
    Quiet,
    Info,
    Debug,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Average noise residuals and analyse the fingerprint spectrum
    Fingerprint(FingerprintArgs),
    /// Crop, resize and JPEG-compress every image of a manifest
    Launder(LaunderArgs),
    /// Train the spectral logistic-regression detector
    Train(TrainArgs),
    /// Score a manifest with a trained detector
    Score(ScoreArgs),
    /// Per-generator accuracy / AUC report
    Eval(EvalArgs),
    /// Average several score files
    Fuse(FuseArgs),
    /// Fit and apply Platt calibration
    Calibrate(CalibrateArgs),
    /// Run the embedded invariant checks
    Selftest,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DenoiserKind {
    Gaussian,
    Wavelet,
    External,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScaleArg {
    Linear,
    Log1p,
}

#[derive(Args, Debug)]
pub struct FingerprintArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Only use synthetic images of this generator
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long, value_enum, default_value_t = DenoiserKind::Gaussian)]
    pub denoiser: DenoiserKind,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Soft threshold for the wavelet denoiser
    #[arg(long, default_value_t = 0.02)]
    pub wavelet_threshold: f64,
    /// Directory of precomputed denoised images
    #[arg(long, required_if_eq("denoiser", "external"))]
    pub external_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 256)]
    pub crop: usize,
    #[arg(long)]
    pub out_spectrum: Option<PathBuf>,
    #[arg(long)]
    pub out_peaks: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScaleArg::Linear)]
    pub scale: ScaleArg,
    #[arg(long, default_value_t = 5.0)]
    pub prominence: f64,
    #[arg(long, default_value_t = 9)]
    pub neighborhood: usize,
}

#[derive(Args, Debug)]
pub struct LaunderArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub target_side: usize,
    #[arg(long, default_value_t = 65)]
    pub qf_min: u8,
    #[arg(long, default_value_t = 100)]
    pub qf_max: u8,
    #[arg(long, default_value_t = 0.625)]
    pub min_crop_frac: f64,
    /// Where to write the per-image crop / quality records
    #[arg(long)]
    pub records_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub crop: usize,
    #[arg(long, default_value_t = 64)]
    pub bins: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long)]
    pub out_model: PathBuf,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 256)]
    pub crop: usize,
    #[arg(long)]
    pub out_scores: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum AccuracyArg {
    Balanced,
    Raw,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Markdown,
    Json,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long, value_enum, default_value_t = AccuracyArg::Balanced)]
    pub accuracy: AccuracyArg,
    #[arg(long, value_enum, default_value_t = ReportFormat::Markdown)]
    pub out: ReportFormat,
    /// Write the report here instead of standard output
    #[arg(long)]
    pub out_file: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    #[arg(long, num_args = 2.., required = true)]
    pub scores: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum CalibrationMode {
    Pooled,
    PerGenerator,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Scores of the calibration images
    #[arg(long)]
    pub scores: PathBuf,
    /// Labels of the calibration subset
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out_params: PathBuf,
    #[arg(long, value_enum, default_value_t = CalibrationMode::Pooled)]
    pub mode: CalibrationMode,
    /// Score file to calibrate with the fitted parameters
    #[arg(long, requires = "out_scores")]
    pub apply_to: Option<PathBuf>,
    /// Output for the calibrated scores; per-generator mode writes `<stem>.<generator>.csv`
    #[arg(long, requires = "apply_to")]
    pub out_scores: Option<PathBuf>,
}
