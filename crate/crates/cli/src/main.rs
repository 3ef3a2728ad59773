//! `hyperlore` command-line tool: compress hyperbolic embeddings to low rank,
//! score them by graph-reconstruction MAP, run rank sweeps, convert between
//! models and generate synthetic trees.
//!
//! Exit codes: 0 on success, 1 on invalid input or usage, 2 when a solver
//! fails numerically.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use hyperlore::{Aggregation, EmbeddingModel, InitStrategy, LossKind, TreeSpec};

#[derive(Debug, Parser)]
#[command(name = "hyperlore", version, about = "Low-rank factorization of hyperbolic embeddings")]
pub struct Cli {
    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(
        long,
        global = true,
        env = "HYPERLORE_THREADS",
        value_parser = positive
    )]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Factorize an embedding file and write a factorization bundle.
    Compress(CompressArgs),
    /// Score embeddings or a factorization bundle against an edge list.
    Evaluate(EvaluateArgs),
    /// Compress at several ranks and methods and tabulate MAP.
    Sweep(SweepArgs),
    /// Rewrite an embedding file in another model.
    Convert(ConvertArgs),
    /// Write a synthetic tree embedding and its edge list.
    Synthesize(SynthesizeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Poincare,
    #[value(alias = "lorentz")]
    Hyperboloid,
}

impl From<ModelArg> for EmbeddingModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Poincare => EmbeddingModel::Poincare,
            ModelArg::Hyperboloid => EmbeddingModel::Hyperboloid,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Closed-form truncated SVD of the spatial block.
    Svd,
    /// Trust region on the Euclidean loss including the first row.
    EuclidFull,
    /// Trust region on squared hyperbolic distances.
    Hyperbolic,
}

impl From<MethodArg> for LossKind {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Svd => LossKind::SpatialEuclidean,
            MethodArg::EuclidFull => LossKind::FullEuclidean,
            MethodArg::Hyperbolic => LossKind::HyperbolicDistance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    SvdWarm,
    Random,
}

impl InitArg {
    pub fn name(self) -> &'static str {
        match self {
            InitArg::SvdWarm => "svd-warm",
            InitArg::Random => "random",
        }
    }
}

impl From<InitArg> for InitStrategy {
    fn from(i: InitArg) -> Self {
        match i {
            InitArg::SvdWarm => InitStrategy::SvdWarm,
            InitArg::Random => InitStrategy::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AggregationArg {
    /// Mean of per-node average precision.
    Node,
    /// Mean over all (node, neighbour) pairs.
    Edge,
}

impl From<AggregationArg> for Aggregation {
    fn from(a: AggregationArg) -> Self {
        match a {
            AggregationArg::Node => Aggregation::Node,
            AggregationArg::Edge => Aggregation::Edge,
        }
    }
}

/// Trust-region settings shared by `compress` and `sweep`.
#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 500, value_parser = positive)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    /// Embedding file: one `label<TAB>coord<TAB>...` line per node.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Hyperboloid)]
    pub model: ModelArg,
    #[arg(long, value_parser = positive)]
    pub rank: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Svd)]
    pub method: MethodArg,
    /// Bundle directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = InitArg::SvdWarm)]
    pub init: InitArg,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Record zero wall times so that reruns are byte-identical.
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["embeddings", "factorization"])))]
pub struct EvaluateArgs {
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Model of `--embeddings`.
    #[arg(long, value_enum, default_value_t = ModelArg::Hyperboloid)]
    pub model: ModelArg,
    /// Bundle directory written by `compress`.
    #[arg(long)]
    pub factorization: Option<PathBuf>,
    /// Edge file: one `label<TAB>label` line per undirected edge.
    #[arg(long)]
    pub edges: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AggregationArg::Node)]
    pub aggregation: AggregationArg,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelArg::Hyperboloid)]
    pub model: ModelArg,
    #[arg(long)]
    pub edges: PathBuf,
    /// Comma-separated ranks; `n` stands for the ambient dimension.
    #[arg(long, value_delimiter = ',', required = true)]
    pub ranks: Vec<String>,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_values_t = [MethodArg::Svd, MethodArg::EuclidFull, MethodArg::Hyperbolic]
    )]
    pub methods: Vec<MethodArg>,
    /// Directory for `sweep.tsv` and `sweep.json`.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset column value (default: input file stem).
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Record zero wall times so that reruns are byte-identical.
    #[arg(long)]
    pub reproducible: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub from: ModelArg,
    #[arg(long, value_enum)]
    pub to: ModelArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthesizeArgs {
    #[arg(long, default_value_t = TreeSpec::default().branching)]
    pub branching: usize,
    #[arg(long, default_value_t = TreeSpec::default().depth)]
    pub depth: usize,
    #[arg(long, default_value_t = TreeSpec::default().ambient_dim)]
    pub ambient_dim: usize,
    /// Hyperbolic length of each tree edge.
    #[arg(long, default_value_t = TreeSpec::default().edge_length)]
    pub edge_length: f64,
    /// Number of independently placed copies of the tree.
    #[arg(long, default_value_t = TreeSpec::default().copies)]
    pub copies: usize,
    #[arg(long, default_value_t = TreeSpec::default().seed)]
    pub seed: u64,
    #[arg(long)]
    pub out_embeddings: PathBuf,
    #[arg(long)]
    pub out_edges: PathBuf,
    /// Model of the written embeddings.
    #[arg(long, value_enum, default_value_t = ModelArg::Hyperboloid)]
    pub model: ModelArg,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("expected a positive integer, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}
