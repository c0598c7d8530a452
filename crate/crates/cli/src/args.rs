//! Flag definitions for the `resprompt` binary.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use resprompt_core::compile::{Ordering, Placement, RefStyle, Strategy, DEFAULT_HEADER};

#[derive(Debug, Parser)]
#[command(
    name = "resprompt",
    about = "Compile reasoning-graph exemplars into prompts, run them against a completion endpoint, and score the results",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a benchmark file into JSON Lines question records.
    Ingest(IngestArgs),
    /// Render a few-shot prompt file for a dataset.
    Render(RenderArgs),
    /// Evaluate questions against a completion endpoint (or the mock).
    Eval(EvalArgs),
    /// Print a run report, optionally with gains against a baseline run.
    Report(ReportArgs),
    /// Sweep the forgetful-reasoner oracle over residual placements.
    Simulate(SimulateArgs),
    /// Inspect or compact the completion cache.
    Cache(CacheArgs),
}

/// Prompt-shaping flags shared by `render` and `eval`.
#[derive(Debug, Clone, Args)]
pub struct PromptFlags {
    /// Prompting strategy: standard | cot | resprompt.
    #[arg(long, default_value = "resprompt")]
    pub strategy: String,
    /// Residual placement: none | first-half | second-half | uniform |
    /// uniform-odd | full.
    #[arg(long, default_value = "full")]
    pub placement: String,
    /// Reference style: exact | symbolic.
    #[arg(long = "ref-style", default_value = "exact")]
    pub ref_style: String,
    /// Exemplar ordering: as-given | ascending | descending | alternating
    /// | random.
    #[arg(long, default_value = "as-given")]
    pub ordering: String,
    /// Seed for every random choice (ordering, noise, sampling).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise kind: wrong-number | wrong-link.
    #[arg(long)]
    pub noise: Option<String>,
    /// Number of noise sites to perturb.
    #[arg(long = "noise-count", default_value_t = 1)]
    pub noise_count: usize,
    /// Prompt header line.
    #[arg(long, default_value = DEFAULT_HEADER)]
    pub header: String,
}

impl PromptFlags {
    pub fn strategy(&self) -> Result<Strategy> {
        Ok(match self.strategy.to_lowercase().as_str() {
            "standard" => Strategy::Standard,
            "cot" => Strategy::Cot,
            "resprompt" => Strategy::ResPrompt,
            other => bail!("unknown strategy `{other}` (standard|cot|resprompt)"),
        })
    }

    pub fn placement(&self) -> Result<Placement> {
        Ok(match self.placement.to_lowercase().as_str() {
            "none" | "no-residual" => Placement::NoResidual,
            "first-half" => Placement::FirstHalf,
            "second-half" => Placement::SecondHalf,
            "uniform" => Placement::Uniform,
            "uniform-odd" => Placement::UniformOdd,
            "full" => Placement::Full,
            other => bail!(
                "unknown placement `{other}` (none|first-half|second-half|uniform|uniform-odd|full)"
            ),
        })
    }

    pub fn ref_style(&self) -> Result<RefStyle> {
        Ok(match self.ref_style.to_lowercase().as_str() {
            "exact" | "exact-repeat" => RefStyle::ExactRepeat,
            "symbolic" | "symbolic-variable" => RefStyle::SymbolicVariable,
            other => bail!("unknown ref style `{other}` (exact|symbolic)"),
        })
    }

    pub fn ordering(&self) -> Result<Ordering> {
        Ok(match self.ordering.to_lowercase().as_str() {
            "as-given" => Ordering::AsGiven,
            "ascending" => Ordering::Ascending,
            "descending" => Ordering::Descending,
            "alternating" => Ordering::Alternating,
            "random" => Ordering::Random,
            other => bail!(
                "unknown ordering `{other}` (as-given|ascending|descending|alternating|random)"
            ),
        })
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Dataset: gsm8k | aqua | mathqa | svamp | scone | strategyqa.
    #[arg(long)]
    pub dataset: String,
    /// The dataset file in its published format.
    #[arg(long)]
    pub input: PathBuf,
    /// Output path for normalized JSON Lines records.
    #[arg(long)]
    pub output: PathBuf,
    /// AQUA step-count sidecar (JSON map question id -> steps).
    #[arg(long)]
    pub steps: Option<PathBuf>,
    /// Keep only a seeded random sample of this size.
    #[arg(long)]
    pub subsample: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub dataset: String,
    /// Number of exemplars (defaults to the full shipped set).
    #[arg(long)]
    pub shots: Option<usize>,
    #[command(flatten)]
    pub prompt: PromptFlags,
    /// Output file (default prompts/<dataset>_<strategy>_<n>shot.txt).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: String,
    /// Normalized question records (JSON Lines, from `ingest`).
    #[arg(long)]
    pub questions: PathBuf,
    /// Model identifier sent to the endpoint.
    #[arg(long, default_value = "default")]
    pub model: String,
    /// Endpoint URL, or `mock:<path>` for the bundled offline endpoint;
    /// defaults to the ENDPOINT_URL environment variable.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub shots: Option<usize>,
    #[command(flatten)]
    pub prompt: PromptFlags,
    /// Sample this many decoding paths and take the majority-vote answer.
    #[arg(long = "self-consistency")]
    pub self_consistency: Option<u32>,
    #[arg(long = "max-new-tokens", default_value_t = 512)]
    pub max_new_tokens: u32,
    /// Evaluate only the first N questions.
    #[arg(long)]
    pub limit: Option<usize>,
    /// Worker threads (in-flight endpoint requests are bounded the same).
    #[arg(long, default_value_t = 3)]
    pub workers: usize,
    /// Run directory (default runs/<config hash>).
    #[arg(long = "run-dir")]
    pub run_dir: Option<PathBuf>,
    /// Completion cache directory (default ./cache).
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory containing records.jsonl.
    #[arg(long)]
    pub run: PathBuf,
    /// Baseline run directory for point/relative gains and cost ratios.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of generated tasks.
    #[arg(long, default_value_t = 1000)]
    pub tasks: usize,
    /// Steps per task.
    #[arg(long, default_value_t = 8)]
    pub steps: usize,
    /// Maximum prerequisites per step.
    #[arg(long, default_value_t = 2)]
    pub fanin: usize,
    /// Largest allowed dependency gap.
    #[arg(long = "gap-ceiling", default_value_t = 4)]
    pub gap_ceiling: usize,
    /// Comma-separated reasoner window sizes.
    #[arg(long, default_value = "1,2,3")]
    pub windows: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV path.
    #[arg(long, default_value = "sweep.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CacheAction {
    Stats,
    Gc,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    #[arg(value_enum)]
    pub action: CacheAction,
    #[arg(long = "cache-dir", default_value = "cache")]
    pub cache_dir: PathBuf,
}
