//! `dsom` command-line interface.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use dsom::{KdVariant, Strategy, TrainConfig};

#[derive(Parser, Debug)]
#[command(
    name = "dsom",
    version,
    about = "Multimodal knowledge-graph reasoning with reinforced teacher selection"
)]
struct Cli {
    /// Worker threads for evaluation (defaults to all cores).
    #[arg(long, global = true, env = "DSOM_THREADS")]
    threads: Option<usize>,

    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic multimodal KG (splits, vocab dumps, feature files).
    GenSynth(GenSynthArgs),
    /// Pre-train the structural, visual and textual teachers.
    Pretrain(PretrainArgs),
    /// Train a student against frozen teachers.
    TrainStudent(TrainStudentArgs),
    /// Filtered link-prediction metrics for a checkpoint.
    Eval(EvalArgs),
    /// Merge run directories into a Markdown summary.
    Report(ReportArgs),
    /// Write the entity and relation id order that feature files must follow.
    Vocab(VocabArgs),
}

#[derive(Args, Debug)]
pub struct GenSynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 200)]
    pub entities: usize,
    #[arg(long, default_value_t = 10)]
    pub relations: usize,
    #[arg(long, default_value_t = 2000)]
    pub triples: usize,
    #[arg(long, default_value_t = 4)]
    pub clusters: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub feature_dim: usize,
    /// How many of (visual, textual) carry signal; the rest are noise.
    #[arg(long, default_value_t = 1)]
    pub signal_modalities: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    /// Full-size defaults.
    Default,
    /// Small settings for the 200-entity synthetic graph.
    Desk,
}

/// Training settings: preset, then config file, then individual flags.
#[derive(Args, Debug, Default)]
pub struct ConfigArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Flat TOML file with `TrainConfig` fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub strategy: Option<Strategy>,
    #[arg(long)]
    pub kd_variant: Option<KdVariant>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Multiply the distillation loss and its gradient by tau^2.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub temperature_sq_scale: Option<bool>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub teacher_epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub policy_learning_rate: Option<f64>,
    #[arg(long)]
    pub policy_hidden: Option<usize>,
    #[arg(long)]
    pub eval_every: Option<usize>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match (&self.config, self.preset) {
            (Some(path), _) => TrainConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            (None, Some(Preset::Desk)) => dsom::pipeline::desk_config(0),
            (None, _) => TrainConfig::default(),
        };
        if self.config.is_some() && self.preset.is_some() {
            log::warn!("--preset ignored because --config was given");
        }
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field.clone() {
                    cfg.$field = v;
                }
            )*};
        }
        set!(
            seed,
            strategy,
            kd_variant,
            gamma,
            tau,
            alpha,
            beta,
            dim,
            temperature_sq_scale,
            epochs,
            teacher_epochs,
            batch_size,
            learning_rate,
            policy_learning_rate,
            policy_hidden,
            eval_every
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    /// Directory with train.txt, valid.txt, test.txt.
    #[arg(long)]
    pub data: PathBuf,
    /// Defaults to `<data>/visual.feat`.
    #[arg(long)]
    pub visual: Option<PathBuf>,
    /// Defaults to `<data>/textual.feat`.
    #[arg(long)]
    pub textual: Option<PathBuf>,
    /// Fraction of entities whose visual and textual features are dropped.
    #[arg(long, default_value_t = 0.0)]
    pub missing_rate: f64,
    /// Parent directory; the run goes to `<out>/pretrain-<hash>`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct TrainStudentArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Teacher checkpoint written by `pretrain`.
    #[arg(long)]
    pub teachers: PathBuf,
    /// Parent directory; the run goes to `<out>/student-<hash>`.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
pub enum TeacherChoice {
    Structural,
    Visual,
    Textual,
    /// Mean of the three softmax distributions.
    Average,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Student or teacher checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Which teacher to score when the checkpoint holds teachers.
    #[arg(long, value_enum, default_value_t = TeacherChoice::Average)]
    pub teacher: TeacherChoice,
    #[arg(long, value_enum, default_value_t = SplitName::Test)]
    pub split: SplitName,
    /// Metrics JSON path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-query rank dump (CSV).
    #[arg(long)]
    pub ranks: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VocabArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Output directory for `entities.tsv` and `relations.tsv` (defaults to `--data`).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Run directories (or parents of run directories).
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Markdown output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::GenSynth(a) => commands::gen_synth(&a),
        Command::Pretrain(a) => commands::pretrain(&a),
        Command::TrainStudent(a) => commands::train_student(&a),
        Command::Eval(a) => commands::eval(&a),
        Command::Report(a) => report::run(&a),
        Command::Vocab(a) => commands::vocab(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
