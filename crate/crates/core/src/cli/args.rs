use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::bench::BenchMode;
use crate::inference::PlanMode;
use crate::model::ModelConfig;
use crate::score::vocab::DEFAULT_PITCH_BASE;
use crate::trainer::TrainConfig;

use super::{BenchSection, DataConfig, InferenceConfig};

fn model() -> ModelConfig {
    ModelConfig::default()
}

fn train() -> TrainConfig {
    TrainConfig::default()
}

fn data() -> DataConfig {
    DataConfig::default()
}

fn bench() -> BenchSection {
    BenchSection::default()
}

fn plan_mode(s: &str) -> Result<PlanMode, String> {
    match s {
        "naive" => Ok(PlanMode::Naive),
        "overlapped" => Ok(PlanMode::Overlapped),
        _ => Err(format!("expected naive or overlapped, got {s:?}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "mixsvs", version, about = "Mixer singing-voice acoustic model: data, training, synthesis, analysis and benchmarks")]
pub struct Cli {
    /// JSON run config; flags given on the command line override it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for data generation, initialisation, batch order and dropout
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads, 0 for one per core
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus of score JSON and MEL1 pairs
    MakeData(MakeDataArgs),
    /// Compute the log-mel spectrogram of a WAV file
    Extract(ExtractArgs),
    /// Train a model on a corpus directory
    Train(TrainArgs),
    /// Synthesize a mel-spectrogram from a score
    Synth(SynthArgs),
    /// Inspect a trained model
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Measure batched and sequential synthesis latency
    Bench(BenchArgs),
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Token-mixer identity probe of every block, with heatmaps
    Probe(ProbeArgs),
    /// Mean L1 loss per position within the segment
    LossProfile(LossProfileArgs),
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Frames per onset and coda consonant
    #[arg(long, default_value_t = train().k)]
    pub k: usize,
    /// MIDI note of pitch id 1
    #[arg(long, default_value_t = DEFAULT_PITCH_BASE)]
    pub pitch_base: u8,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = model().n_blocks)]
    pub blocks: usize,
    /// Segment length in frames
    #[arg(long, default_value_t = model().seq_len)]
    pub seq_len: usize,
    /// Phoneme embedding width
    #[arg(long, default_value_t = model().d_phoneme)]
    pub d_phoneme: usize,
    /// Pitch embedding width
    #[arg(long, default_value_t = model().d_pitch)]
    pub d_pitch: usize,
    /// Channel mixer hidden width
    #[arg(long, default_value_t = model().hidden_channel)]
    pub hidden_channel: usize,
    /// Token mixer hidden width
    #[arg(long, default_value_t = model().hidden_token)]
    pub hidden_token: usize,
    #[arg(long, default_value_t = model().dropout)]
    pub dropout: f32,
    /// Drop the token mixers (channel-mixer-only model)
    #[arg(long)]
    pub ablate: bool,
}

#[derive(Debug, Args)]
pub struct MakeDataArgs {
    /// Output directory; gets train/ and val/ subdirectories
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = data().songs)]
    pub songs: usize,
    #[arg(long, default_value_t = data().val_songs)]
    pub val_songs: usize,
    /// Length of each song in seconds
    #[arg(long, default_value_t = data().seconds_per_song)]
    pub seconds: f64,
    #[command(flatten)]
    pub align: AlignArgs,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Score to check against the audio length
    #[arg(long)]
    pub score: Option<PathBuf>,
    #[command(flatten)]
    pub align: AlignArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus directory with train/ and optionally val/
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for the model, log and checkpoints
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = train().total_steps)]
    pub steps: u64,
    #[arg(long, default_value_t = train().batch_size)]
    pub batch_size: usize,
    /// Peak learning rate
    #[arg(long, default_value_t = train().lr)]
    pub lr: f32,
    #[arg(long, default_value_t = train().beta1)]
    pub beta1: f32,
    #[arg(long, default_value_t = train().beta2)]
    pub beta2: f32,
    /// Warmup steps [default: steps / 10]
    #[arg(long)]
    pub warmup: Option<u64>,
    /// Steps between validation and checkpoints
    #[arg(long, default_value_t = train().eval_interval)]
    pub eval_interval: u64,
    /// Global gradient norm cap, 0 to disable
    #[arg(long, default_value_t = train().clip_norm)]
    pub clip_norm: f32,
    /// Continue from a checkpoint; its saved training config is used
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub align: AlignArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Score JSON
    #[arg(long)]
    pub score: PathBuf,
    /// Model checkpoint (.ten1 with its .json sidecar)
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output MEL1 file
    #[arg(long)]
    pub out: PathBuf,
    /// Segmentation plan: naive or overlapped
    #[arg(long, value_parser = plan_mode, default_value = "overlapped")]
    pub mode: PlanMode,
    /// Frames discarded at each inner chunk boundary
    #[arg(long, default_value_t = InferenceConfig::default().overlap)]
    pub w: usize,
    #[command(flatten)]
    pub align: AlignArgs,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Output directory for heatmaps and probe.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct LossProfileArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Corpus directory; its val/ subdirectory is used when present
    #[arg(long)]
    pub data: PathBuf,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = train().batch_size)]
    pub batch_size: usize,
    #[command(flatten)]
    pub align: AlignArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Model checkpoint; a freshly initialised model when absent
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Input lengths in frames
    #[arg(long, value_delimiter = ',', default_values_t = bench().frames)]
    pub frames: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = bench().modes)]
    pub modes: Vec<BenchMode>,
    /// Timed runs per measurement
    #[arg(long, default_value_t = bench().repeats)]
    pub repeats: usize,
    /// Untimed runs before timing
    #[arg(long, default_value_t = bench().warmup)]
    pub warmup_runs: usize,
    /// Overlap for batched_overlapped
    #[arg(long, default_value_t = InferenceConfig::default().overlap)]
    pub w: usize,
    /// Output CSV
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}
