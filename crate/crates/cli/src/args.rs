use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "wardsense", version, about = "Ward sensor analytics: synthesis, training, evaluation, serving and replay")]
pub struct Cli {
    /// Suppress wall-clock fields (timings, log timestamps) so output is byte-for-byte repeatable.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one synthetic trace: accelerometer JSONL, 16-bit PCM audio or a stroke file.
    Synth(SynthArgs),
    /// Generate a labelled synthetic corpus for one of the three tasks.
    SynthDataset(SynthDatasetArgs),
    /// Train the accelerometer activity classifier.
    TrainActivity(TrainActivityArgs),
    /// Train the voice-based depression classifier.
    TrainDepression(TrainCaseArgs),
    /// Train the spiral-drawing cognitive screening classifier.
    TrainCognitive(TrainCaseArgs),
    /// Report accuracy, per-class precision/recall and the confusion matrix.
    Eval(EvalArgs),
    /// Write the log-magnitude spectrogram of a PCM file as CSV.
    Spectrogram(SpectrogramArgs),
    /// Write the voxel grid of a stroke file as CSV.
    Voxelize(VoxelizeArgs),
    /// Write the (x, y, scaled time, hover) point cloud of a stroke file as CSV.
    ExportCloud(ExportCloudArgs),
    /// Run the ward service until interrupted.
    Serve(ServeArgs),
    /// Play an accelerometer trace against a running service.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// walking, idle, fall, spiral_smooth, spiral_tremor, tone_low or tone_high.
    #[arg(long)]
    pub kind: String,
    /// Length in seconds.
    #[arg(long, default_value_t = 10.0)]
    pub duration: f64,
    /// Sample rate in Hz; defaults to the kind's usual rate.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Overrides the kind's default amplitude.
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Whole seconds of a walking trace to replace with falls, e.g. `20,21,22`.
    #[arg(long, value_delimiter = ',')]
    pub falls: Vec<usize>,
    /// Number of accelerometer records to write, seeds counting up from `--seed`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Activity,
    Depression,
    Cognitive,
}

#[derive(Debug, Args)]
pub struct SynthDatasetArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    /// Activity: a JSONL file. Depression and cognitive: a directory that
    /// receives `cases.csv`, `train.csv`, `test.csv` and the case files.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Activity windows per class.
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    /// Depression or cognitive cases (default 40 and 60).
    #[arg(long)]
    pub cases: Option<usize>,
    /// Seconds per depression recording.
    #[arg(long, default_value_t = 6.0)]
    pub seconds: f64,
    /// Depression sample rate.
    #[arg(long, default_value_t = 44100)]
    pub rate: u32,
    /// Fraction of cases listed in `test.csv`.
    #[arg(long, default_value_t = 0.25)]
    pub holdout: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ArchArg {
    #[value(name = "1d")]
    OneD,
    #[value(name = "3d")]
    ThreeD,
}

#[derive(Debug, Args)]
pub struct TrainCommon {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Defaults to the task's standard schedule.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Where to write the trained model.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainActivityArgs {
    /// Labelled accelerometer records, one JSON object per line.
    #[arg(long)]
    pub data: PathBuf,
    /// A manifest file, or `synthetic` (walking/idle/fall) or `unimib-shar` (17 classes).
    #[arg(long, default_value = "synthetic")]
    pub manifest: String,
    #[arg(long, value_enum, default_value = "1d")]
    pub arch: ArchArg,
    /// Model input rate; records are resampled to it.
    #[arg(long, default_value_t = 50.0)]
    pub window_rate: f64,
    #[arg(long, default_value_t = 1.0)]
    pub window_seconds: f64,
    #[command(flatten)]
    pub common: TrainCommon,
}

#[derive(Debug, Args)]
pub struct TrainCaseArgs {
    /// A `cases.csv` index (`id,label,path[,rate_hz]`).
    #[arg(long)]
    pub data: PathBuf,
    /// Audio rate for index rows without `rate_hz`.
    #[arg(long, default_value_t = 44100)]
    pub rate: u32,
    #[command(flatten)]
    pub common: TrainCommon,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Activity JSONL for activity models, a case index otherwise.
    #[arg(long)]
    pub data: PathBuf,
    /// Audio rate for index rows without `rate_hz`.
    #[arg(long, default_value_t = 44100)]
    pub rate: u32,
    /// Also write the confusion matrix as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SpectrogramArgs {
    /// Headerless little-endian 16-bit mono PCM.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 44100)]
    pub rate: u32,
    #[arg(long, default_value_t = 1024)]
    pub fft: usize,
    #[arg(long, default_value_t = 512)]
    pub hop: usize,
    #[arg(long, default_value_t = -80.0, allow_hyphen_values = true)]
    pub floor_db: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VoxelizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Grid size along x, y and time.
    #[arg(long, default_value = "16,16,16")]
    pub dims: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportCloudArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Accelerometer JSONL; records are played back to back.
    #[arg(long)]
    pub trace: PathBuf,
    /// Base URL of the service, e.g. `http://127.0.0.1:8080`.
    #[arg(long)]
    pub url: String,
    #[arg(long)]
    pub patient: String,
    /// Packets per second of wall-clock time; 0 sends as fast as possible.
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    /// Also write the full report as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}
