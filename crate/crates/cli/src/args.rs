use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use seishet::model::AttentionVariant;
use seishet::segy::{Axis, MapFormat};
use seishet::synthgen::{Span, PATCH_STRIDE};

#[derive(Debug, Parser)]
#[command(name = "seishet", version, about = "Seismic structural-heterogeneity detection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic patch dataset, or cut real patches from SEG-Y.
    Gen(GenArgs),
    /// Train a network from scratch on a dataset.
    Train(TrainArgs),
    /// Retrain a checkpoint with its leading layers frozen.
    Finetune(FinetuneArgs),
    /// Write full-section confidence maps.
    Predict(PredictArgs),
    /// Score confidence maps against ground-truth masks.
    Eval(EvalArgs),
    /// Print the model summary of a checkpoint, or diff two checkpoints.
    Info(InfoArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Master seed.
    #[arg(long, env = "SEISHET_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct KeyArgs {
    /// 1-based trace-header byte of the inline number.
    #[arg(long, default_value_t = 189)]
    pub inline_byte: usize,
    /// 1-based trace-header byte of the crossline number.
    #[arg(long, default_value_t = 193)]
    pub crossline_byte: usize,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Number of synthetic sections.
    #[arg(long, default_value_t = 4000, value_parser = clap::value_parser!(u64).range(1..))]
    pub count: u64,
    #[command(flatten)]
    pub seed: SeedArg,
    /// Section height in samples.
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Section width in traces.
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    /// Patch stride [default: 22 synthetic, 10 SEG-Y].
    #[arg(long)]
    pub stride: Option<usize>,
    /// Also write each full section (`sections/section_NNNNN.f32`) and its mask.
    #[arg(long)]
    pub emit_sections: bool,
    /// Faults per section, `min,max`.
    #[arg(long)]
    pub faults: Option<Span<usize>>,
    /// Fault throw in samples, `min,max`.
    #[arg(long)]
    pub throw: Option<Span<usize>>,
    /// Noise level as a fraction of section RMS, `min,max`.
    #[arg(long)]
    pub noise: Option<Span<f64>>,
    /// Ricker period in samples, `min,max`.
    #[arg(long)]
    pub period: Option<Span<f64>>,
    /// Fault mask dilation radius.
    #[arg(long)]
    pub dilation: Option<usize>,
    /// Cut real-data patches from this SEG-Y file instead.
    #[arg(long)]
    pub segy: Option<PathBuf>,
    /// Section family for `--segy`.
    #[arg(long, default_value = "inline")]
    pub axis: Axis,
    /// Line numbers for `--segy`, comma separated.
    #[arg(long = "line", value_delimiter = ',', requires = "segy")]
    pub lines: Vec<i32>,
    /// Directory of `mask_<axis><line>.pgm` annotations for `--segy`.
    #[arg(long, requires = "segy")]
    pub masks: Option<PathBuf>,
    /// Real window side before rescaling to the network patch.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    #[command(flatten)]
    pub keys: KeyArgs,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    /// Epoch log [default: <out>.log].
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Training fraction of the dataset.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
    /// Loss weight of heterogeneity pixels.
    #[arg(long, default_value_t = 1.0)]
    pub positive_weight: f64,
    /// Use only the first N samples of the dataset.
    #[arg(long)]
    pub count_limit: Option<usize>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub fit: FitArgs,
    /// Attention block.
    #[arg(long, default_value = "self")]
    pub attention: AttentionVariant,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Leading layer units kept fixed.
    #[arg(long, default_value_t = 0)]
    pub freeze_prefix: usize,
    /// SE reduction ratio.
    #[arg(long, default_value_t = 4)]
    pub se_ratio: usize,
    /// Self-attention heads.
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    /// Total key depth.
    #[arg(long, default_value_t = 32)]
    pub key_depth: usize,
    /// Total value depth.
    #[arg(long, default_value_t = 32)]
    pub value_depth: usize,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Base checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Expected attention block of the base checkpoint.
    #[arg(long)]
    pub attention: Option<AttentionVariant>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Leading layer units kept fixed.
    #[arg(long, default_value_t = 2)]
    pub freeze_prefix: usize,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Trained checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Output directory for the maps.
    #[arg(long)]
    pub out: PathBuf,
    /// Map encoding.
    #[arg(long, default_value = "pgm")]
    pub format: MapFormat,
    /// SEG-Y input.
    #[arg(long, conflicts_with = "raw", required_unless_present = "raw")]
    pub segy: Option<PathBuf>,
    /// Section family for `--segy`.
    #[arg(long, default_value = "inline")]
    pub axis: Axis,
    /// Line numbers for `--segy`, comma separated.
    #[arg(long = "line", value_delimiter = ',', required_unless_present = "raw")]
    pub lines: Vec<i32>,
    #[command(flatten)]
    pub keys: KeyArgs,
    /// Raw little-endian f32 section, row-major `height x width`.
    #[arg(long, requires_all = ["height", "width"])]
    pub raw: Option<PathBuf>,
    /// Rows of the `--raw` section.
    #[arg(long)]
    pub height: Option<usize>,
    /// Columns of the `--raw` section.
    #[arg(long)]
    pub width: Option<usize>,
    /// Window side [default: 20 SEG-Y, 44 raw].
    #[arg(long)]
    pub window: Option<usize>,
    /// Window stride [default: 10 SEG-Y, 22 raw].
    #[arg(long)]
    pub stride: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predicted confidence maps (PGM or CSV).
    #[arg(long, num_args = 1.., required = true)]
    pub pred: Vec<PathBuf>,
    /// Ground-truth masks (PGM), one per prediction.
    #[arg(long, num_args = 1.., required = true)]
    pub truth: Vec<PathBuf>,
    /// Probability at or above which a pixel is positive.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Also write the JSON report here.
    #[arg(long)]
    pub json_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    /// Checkpoint to describe.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Compare every tensor against another checkpoint.
    #[arg(long)]
    pub diff: Option<PathBuf>,
}

pub const RAW_WINDOW: usize = seishet::model::PATCH;
pub const RAW_STRIDE: usize = PATCH_STRIDE;
