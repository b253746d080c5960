use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use regforge::pools::PoolCategory;
use regforge::trainprep::Backbone;
use regforge::SubjectKind;

#[derive(Debug, Parser)]
#[command(name = "regforge", version, about = "Regularization data, training prep, evaluation and study tooling")]
pub struct Cli {
    /// TOML config file. Environment variables and flags override it.
    #[arg(long, global = true, env = "REGFORGE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Master seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Report what would be done without writing outputs.
    #[arg(long, global = true)]
    pub dry_run: bool,

    /// On failure, print a JSON error object to stderr.
    #[arg(long, global = true)]
    pub json_errors: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attribute and phrase pools.
    Pools {
        #[command(subcommand)]
        cmd: PoolsCmd,
    },
    /// Regularization dataset plans.
    Plan {
        #[command(subcommand)]
        cmd: PlanCmd,
    },
    /// Image generation from a plan.
    Dataset {
        #[command(subcommand)]
        cmd: DatasetCmd,
    },
    /// Training-side artifacts.
    Train {
        #[command(subcommand)]
        cmd: TrainCmd,
    },
    /// Fidelity and alignment scoring.
    Eval {
        #[command(subcommand)]
        cmd: EvalCmd,
    },
    /// Pairwise preference study.
    Study {
        #[command(subcommand)]
        cmd: StudyCmd,
    },
    /// Write the score table and the preference table as CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TextBackendKind {
    Fixture,
    Http,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelBackendKind {
    Stub,
    Http,
}

#[derive(Debug, Subcommand)]
pub enum PoolsCmd {
    /// Ask a language model for each pool a subject kind needs.
    Gen(PoolsGenArgs),
    /// Build one pool from a text file of raw entries.
    Ingest(PoolsIngestArgs),
    /// Check a pool directory against a subject kind.
    Validate(PoolsValidateArgs),
}

#[derive(Debug, Args)]
pub struct PoolsGenArgs {
    #[arg(long)]
    pub kind: SubjectKind,
    /// Limit to these categories (default: all the kind needs).
    #[arg(long = "category")]
    pub categories: Vec<PoolCategory>,
    #[arg(long, value_enum, default_value = "http")]
    pub backend: TextBackendKind,
    /// Directory of canned responses for `--backend fixture`.
    #[arg(long)]
    pub fixture_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PoolsIngestArgs {
    #[arg(long)]
    pub category: PoolCategory,
    /// Raw model output, one entry per line; list markers are stripped.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub provenance: Option<String>,
}

#[derive(Debug, Args)]
pub struct PoolsValidateArgs {
    #[arg(long)]
    pub pool_dir: Option<PathBuf>,
    #[arg(long)]
    pub kind: SubjectKind,
}

#[derive(Debug, Subcommand)]
pub enum PlanCmd {
    Build(PlanBuildArgs),
    Validate(PlanValidateArgs),
}

#[derive(Debug, Args)]
pub struct PlanBuildArgs {
    #[arg(long)]
    pub subject: Option<PathBuf>,
    #[arg(long)]
    pub pool_dir: Option<PathBuf>,
    #[arg(long)]
    pub total: Option<usize>,
    /// Same-background, new-background and styled shares, e.g. 0.2,0.6,0.2.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    pub ratios: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlanValidateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub pool_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    Generate(DatasetGenerateArgs),
}

#[derive(Debug, Args)]
pub struct GenerationArgs {
    #[arg(long, value_enum, default_value = "http")]
    pub backend: ModelBackendKind,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub steps: Option<u32>,
}

#[derive(Debug, Args)]
pub struct DatasetGenerateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Defaults to `<out-dir>/manifest.jsonl`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenerationArgs,
}

#[derive(Debug, Subcommand)]
pub enum TrainCmd {
    /// Export captions and crops for the training (and regularization) set.
    Prep(TrainPrepArgs),
    /// Sample training batches.
    Batch(TrainBatchArgs),
    /// Recommended iteration range for a subject.
    Iters(TrainItersArgs),
}

#[derive(Debug, Args)]
pub struct CropArgs {
    #[arg(long)]
    pub crop_mode: Option<String>,
    #[arg(long)]
    pub ratio_min: Option<f64>,
    #[arg(long)]
    pub ratio_max: Option<f64>,
    /// Size of training images that are not PNG, as WIDTHxHEIGHT.
    #[arg(long)]
    pub train_size: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainPrepArgs {
    #[arg(long)]
    pub subject: Option<PathBuf>,
    /// Regularization manifest whose done images are appended.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Token frequency TSV; prints the selected identifier token.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[command(flatten)]
    pub crop: CropArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainBatchArgs {
    #[arg(long)]
    pub subject: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Apply attribute dropout to regularization captions (needs pools).
    #[arg(long)]
    pub dropout: bool,
    #[arg(long)]
    pub pool_dir: Option<PathBuf>,
    #[arg(long)]
    pub p_keep: Option<f64>,
    #[command(flatten)]
    pub crop: CropArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainItersArgs {
    /// Dataset name; defaults to the subject spec's.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub subject: Option<PathBuf>,
    #[arg(long, default_value = "sd")]
    pub backbone: Backbone,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    Run(EvalRunArgs),
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    /// Subject spec files.
    #[arg(long = "subject", required = true)]
    pub subjects: Vec<PathBuf>,
    /// Manifest of generated evaluation images.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Generate missing evaluation images first.
    #[arg(long)]
    pub generate: bool,
    /// Prompt templates with `{}` for the subject, one per line.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub image_dir: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenerationArgs,
    #[arg(long, value_enum, default_value = "http")]
    pub embed_backend: ModelBackendKind,
    #[arg(long)]
    pub name_mode: Option<String>,
    #[arg(long)]
    pub prompts_per_subject: Option<usize>,
    #[arg(long)]
    pub images_per_prompt: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum StudyCmd {
    Plan(StudyPlanArgs),
    Serve(StudyServeArgs),
    Aggregate(StudyAggregateArgs),
}

#[derive(Debug, Args)]
pub struct StudyPlanArgs {
    /// ID,METHOD_A,MANIFEST_A,METHOD_B,MANIFEST_B; repeat per pairing.
    #[arg(long = "pairing", required = true)]
    pub pairings: Vec<String>,
    /// Subject specs supplying reference images and identifier tokens.
    #[arg(long = "subject", required = true)]
    pub subjects: Vec<PathBuf>,
    #[arg(long)]
    pub questions_per_type: Option<usize>,
    #[arg(long)]
    pub groups: Option<usize>,
    #[arg(long)]
    pub participants: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyServeArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub answers: PathBuf,
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct StudyAggregateArgs {
    #[arg(long)]
    pub plan: PathBuf,
    #[arg(long)]
    pub answers: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Evaluation report JSON.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Aggregated study results JSON.
    #[arg(long)]
    pub study: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}
