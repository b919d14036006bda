mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qexp_core::{BidiRule, EmbeddingFormat, Normalization};

/// Query-expansion rescoring, score fusion and EER/minDCF evaluation for
/// embedding verification trials.
#[derive(Debug, Parser)]
#[command(name = "qexp", version)]
pub struct Cli {
    /// `key = value` file; keys are flag names (e.g. `top-n = 10`).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Suppress warnings and summaries on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Baseline cosine scores for a trial list.
    Score(ScoreArgs),
    /// Rocchio query-expansion scores for a trial list.
    Qe(QeArgs),
    /// Linear fusion of two score files.
    Fuse(FuseArgs),
    /// EER and minDCF of a labeled score file.
    Eval(EvalArgs),
    /// Evaluate a grid of QE and/or fusion parameters.
    Sweep(SweepArgs),
    /// Generate a synthetic cohort and trial list.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct EmbeddingInput {
    #[arg(long)]
    pub embeddings: PathBuf,

    /// Embedding file format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<EmbeddingFormat>,

    /// Score the vectors as given instead of L2-normalizing them first.
    #[arg(long)]
    pub raw_embeddings: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: EmbeddingInput,
    #[arg(long)]
    pub trials: PathBuf,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct QeFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    /// Expand both sides of each trial.
    #[arg(long)]
    pub bidirectional: bool,
    /// `mean_of_directions` or `expanded_vs_expanded`.
    #[arg(long)]
    pub bidi_rule: Option<BidiRule>,
    /// Remove each trial's other side from the neighbor ranking.
    #[arg(long)]
    pub exclude_trial_partner: bool,
    /// Recompute pair scores on demand instead of storing all pairs.
    #[arg(long)]
    pub lazy: bool,
}

#[derive(Debug, Args)]
pub struct QeArgs {
    #[command(flatten)]
    pub input: EmbeddingInput,
    #[arg(long)]
    pub trials: PathBuf,
    #[command(flatten)]
    pub qe: QeFlags,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub scores_a: PathBuf,
    #[arg(long)]
    pub scores_b: PathBuf,
    /// Weight of the first system.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Per-system score normalization: none, z or minmax.
    #[arg(long)]
    pub normalize: Option<Normalization>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct DcfFlags {
    #[arg(long)]
    pub c_miss: Option<f64>,
    #[arg(long)]
    pub c_fa: Option<f64>,
    #[arg(long)]
    pub p_target: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub scores: PathBuf,
    #[command(flatten)]
    pub dcf: DcfFlags,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Also write the DET curve as CSV.
    #[arg(long)]
    pub det: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Embeddings for a QE sweep (requires --trials).
    #[arg(long, requires = "trials", conflicts_with_all = ["scores_a", "scores_b"])]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<EmbeddingFormat>,
    #[arg(long)]
    pub raw_embeddings: bool,
    #[arg(long, requires = "embeddings")]
    pub trials: Option<PathBuf>,
    /// Second system fused with every QE point over the lambda axis.
    #[arg(long, requires = "embeddings")]
    pub fuse_with: Option<PathBuf>,

    /// First system of a fusion-only sweep.
    #[arg(long, requires = "scores_b")]
    pub scores_a: Option<PathBuf>,
    #[arg(long, requires = "scores_a")]
    pub scores_b: Option<PathBuf>,

    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub top_ns: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,

    #[command(flatten)]
    pub qe: QeFlags,
    #[arg(long)]
    pub normalize: Option<Normalization>,
    #[command(flatten)]
    pub dcf: DcfFlags,

    #[arg(long)]
    pub report_csv: Option<PathBuf>,
    #[arg(long)]
    pub report_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_speakers: Option<usize>,
    #[arg(long)]
    pub utts_per_speaker: Option<usize>,
    #[arg(long)]
    pub dimension: Option<usize>,
    #[arg(long)]
    pub between_std: Option<f64>,
    #[arg(long)]
    pub within_std: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_target: Option<usize>,
    #[arg(long)]
    pub n_nontarget: Option<usize>,
    /// Seed of the trial sampler; defaults to `seed + 1`.
    #[arg(long)]
    pub trial_seed: Option<u64>,

    #[arg(long)]
    pub embeddings_out: PathBuf,
    /// Embedding output format; inferred from the extension when omitted.
    #[arg(long)]
    pub format: Option<EmbeddingFormat>,
    #[arg(long)]
    pub trials_out: Option<PathBuf>,
    /// Generation metadata (JSON); defaults to `<embeddings-out>.meta.json`.
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("qexp: error: {msg}");
            ExitCode::FAILURE
        }
    }
}
