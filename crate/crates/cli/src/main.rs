mod commands;
mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use netfair::fairness::{ClassifierKind, Objective, LAMBDA_GRID};
use netfair::mpva::MpvaConfig;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(name = "netfair", version, about = "Causal fairness auditing and mitigation for node classifiers")]
struct Cli {
    /// Workspace root for relative paths; falls back to $NETFAIR_ROOT, then the current directory.
    #[arg(long, global = true)]
    root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a semi-synthetic networked dataset with interventional ground truth.
    Generate(GenerateArgs),
    /// Train the interventional estimator on a dataset.
    TrainMpva(TrainMpvaArgs),
    /// Measure accuracy, RD, CF and gCF of a classifier.
    Audit(AuditArgs),
    /// Train a classifier under a fairness regularizer.
    Mitigate(MitigateArgs),
    /// Estimation error against the number of message-passing layers.
    Sensitivity(SensitivityArgs),
    /// Compare the closed-form interventional distribution with enumeration on random discrete models.
    OracleCheck(OracleCheckArgs),
    /// Accuracy/fairness trade-off over a grid of regularization weights.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DataArgs {
    /// Directory written by `generate`.
    #[arg(long, conflicts_with = "manifest")]
    pub data: Option<PathBuf>,
    /// TOML manifest describing a tabular dataset with an edge list.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MpvaArgs {
    #[arg(long, default_value_t = MpvaConfig::default().a_dim)]
    pub a_dim: usize,
    #[arg(long, default_value_t = MpvaConfig::default().v_dim)]
    pub v_dim: usize,
    #[arg(long, default_value_t = MpvaConfig::default().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = MpvaConfig::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = MpvaConfig::default().phase1_epochs)]
    pub phase1_epochs: usize,
    #[arg(long, default_value_t = MpvaConfig::default().phase2_epochs)]
    pub phase2_epochs: usize,
    #[arg(long, default_value_t = MpvaConfig::default().kl_beta)]
    pub kl_beta: f64,
    /// Abduct by sampling the posterior instead of taking its mean.
    #[arg(long)]
    pub sample_abduction: bool,
}

impl MpvaArgs {
    pub fn config(&self, layers: usize, seed: u64) -> MpvaConfig {
        MpvaConfig {
            layers,
            a_dim: self.a_dim,
            v_dim: self.v_dim,
            hidden: self.hidden,
            lr: self.lr,
            phase1_epochs: self.phase1_epochs,
            phase2_epochs: self.phase2_epochs,
            kl_beta: self.kl_beta,
            seed,
            sample_abduction: self.sample_abduction,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindArg {
    Mlp,
    Gcn,
}

impl From<KindArg> for ClassifierKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Mlp => ClassifierKind::Mlp,
            KindArg::Gcn => ClassifierKind::Gcn,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveArg {
    None,
    Rd,
    Cf,
    Gcf,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::None => Objective::None,
            ObjectiveArg::Rd => Objective::Rd,
            ObjectiveArg::Cf => Objective::Cf,
            ObjectiveArg::Gcf => Objective::Gcf,
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ClassifierArgs {
    #[arg(long, value_enum, default_value = "mlp")]
    pub kind: KindArg,
    #[arg(long, default_value_t = 16)]
    pub clf_hidden: usize,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub clf_lr: f64,
    /// Temperature of the smooth gCF surrogate.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Fraction of each sensitive group held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GenerateArgs {
    #[arg(long)]
    pub preset: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override the preset's node count.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct TrainMpvaArgs {
    #[command(flatten)]
    pub source: DataArgs,
    /// Run directory receiving `ckpt/` and `results/`.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint name inside `ckpt/`.
    #[arg(long, default_value = "mpva")]
    pub name: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Message-passing layers.
    #[arg(long, default_value_t = MpvaConfig::default().layers)]
    pub layers: usize,
    #[command(flatten)]
    pub mpva: MpvaArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AuditArgs {
    #[command(flatten)]
    pub source: DataArgs,
    /// Trained interventional estimator; without it gCF is not estimated.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Classifier checkpoint; an untrained classifier is audited when absent.
    #[arg(long)]
    pub classifier: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Seed of the evaluation split and of the untrained classifier.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub clf: ClassifierArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub source: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub objective: ObjectiveArg,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Comma-separated seeds, each an independent repetition.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub clf: ClassifierArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub source: DataArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub objective: ObjectiveArg,
    #[arg(long, value_delimiter = ',', default_values_t = LAMBDA_GRID.to_vec())]
    pub lambdas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub clf: ClassifierArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SensitivityArgs {
    #[arg(long, default_value = "h3")]
    pub preset: String,
    /// Layer counts: a range `1..5` (inclusive) or a comma list.
    #[arg(long, default_value = "1..5")]
    pub layers: String,
    /// Number of seeds, run as 0..N.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub mpva: MpvaArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    /// Largest node count of the random models.
    #[arg(long, default_value_t = 6)]
    pub max_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let root = netfair::data_io::resolve_root(cli.root.as_deref());
    match cli.command {
        Command::Generate(a) => commands::generate(&root, &a),
        Command::TrainMpva(a) => commands::train_mpva(&root, &a),
        Command::Audit(a) => commands::audit(&root, &a),
        Command::Mitigate(a) => commands::mitigate(&root, &a),
        Command::Sensitivity(a) => commands::sensitivity(&root, &a),
        Command::OracleCheck(a) => commands::oracle_check(&root, &a),
        Command::Sweep(a) => commands::sweep(&root, &a),
    }
}
