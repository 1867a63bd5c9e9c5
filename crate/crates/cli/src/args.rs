use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use featdistill::distill::StudentArch;
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(
    name = "featdistill",
    version,
    about = "Embedding distillation and frozen-feature evaluation",
    after_help = "Exit codes: 0 ok, 1 usage error, 2 data or validation error, 3 numerical failure.\n\
                  Settings resolve as flags > --config file > defaults."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert an embedding CSV into an embedding set
    Ingest(IngestArgs),
    /// Cut images into foreground tiles, optionally with augmented crops
    Tile(TileArgs),
    /// Train a projection head (and optional MLP) from student to teacher embeddings
    Distill(DistillArgs),
    /// PCA + kNN benchmark over repeated train/test splits
    EvalKnn(EvalKnnArgs),
    /// Linear CKA between two embedding sets, matched by sample id
    Cka(CkaArgs),
    /// Multi-center robustness index over balanced resamples
    Robustness(RobustnessArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; a top-level "config" object is used when present
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: Option<u32>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// CSV with columns sample_id,bag_id,label,center_id,tissue_class,v1..vd
    #[arg(long)]
    pub input: PathBuf,
    /// report.json of a `tile` run; every CSV sample id must name one of its tiles
    #[arg(long)]
    pub tiles: Option<PathBuf>,
    #[command(flatten)]
    pub flags: IngestFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestFlags {
    /// Class names in label order, comma separated
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Args)]
pub struct TileArgs {
    /// PNG or PPM images
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[command(flatten)]
    pub flags: TileFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct TileFlags {
    /// Augmented crops written per kept tile
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_augment: Option<usize>,
    #[command(flatten)]
    pub augment: AugmentFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct AugmentFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tile: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fg_saturation_threshold: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fg_min_fraction: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_hflip: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_vflip: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_jitter: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_blur: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur_kernel: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur_sigma_min: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub blur_sigma_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Student embedding set
    #[arg(long)]
    pub student: PathBuf,
    /// Teacher embedding set
    #[arg(long)]
    pub teacher: PathBuf,
    /// Also write head(student) for every student row as `projected/`
    #[arg(long)]
    pub project: bool,
    #[command(flatten)]
    pub flags: DistillFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct DistillFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_loss: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_start: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr_end: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wd_start: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wd_end: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_steps: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta1: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta2: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps_adam: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_violations: Option<usize>,
    #[arg(long, value_parser = ["cumulative", "consecutive"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation_count: Option<String>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bn_momentum: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bn_eps: Option<f64>,
    /// `identity` or `mlp:W1,W2,...` (hidden widths)
    #[arg(long, value_parser = parse_arch)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub student_arch: Option<StudentArch>,
}

fn parse_arch(s: &str) -> Result<StudentArch, String> {
    if s == "identity" {
        return Ok(StudentArch::Identity);
    }
    let widths = s
        .strip_prefix("mlp:")
        .ok_or_else(|| format!("expected `identity` or `mlp:W1,W2,...`, got `{s}`"))?;
    let hidden = widths
        .split(',')
        .map(|w| w.trim().parse::<usize>().map_err(|_| format!("bad hidden width `{w}`")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(StudentArch::Mlp { hidden })
}

#[derive(Debug, Args)]
pub struct EvalKnnArgs {
    /// Labelled embedding set
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub flags: EvalKnnFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalKnnFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_components: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_repeats: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
    #[arg(long, value_parser = ["patch", "bag"])]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
}

#[derive(Debug, Args)]
pub struct CkaArgs {
    #[arg(long)]
    pub x: PathBuf,
    #[arg(long)]
    pub y: PathBuf,
    #[command(flatten)]
    pub flags: CkaFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct CkaFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_subsamples: Option<usize>,
    /// Rows per subsample (default: all aligned rows, at most 2048)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subsample_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RobustnessArgs {
    /// Embedding set with tissue_class and center_id on every row
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub flags: RobustnessFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args, Serialize)]
pub struct RobustnessFlags {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_neighbors: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_folds: Option<usize>,
}
