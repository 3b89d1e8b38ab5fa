//! `tempograph`: train, sample and score generative models of temporal graphs.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tempograph_core::Error;

#[derive(Parser, Debug)]
#[command(name = "tempograph", version, about = "Generative models of temporal interaction graphs")]
struct Cli {
    /// Worker threads; 1 makes every output byte-reproducible.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to an edge list and write a checkpoint.
    Train(TrainArgs),
    /// Sample a synthetic edge list from a checkpoint.
    Generate(GenerateArgs),
    /// Compare a generated edge list against its source.
    Evaluate(EvaluateArgs),
    /// Dump temporal random walks of an edge list.
    Walks(WalksArgs),
}

/// Settings shared by every subcommand that builds a `RunConfig`.
#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `transductive` or `inductive`.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    walk_len: Option<usize>,
    /// Generated walk length; 0 picks it from the graph size.
    #[arg(long)]
    gen_len: Option<usize>,
    /// Temporal neighborhood cap, or `none`.
    #[arg(long)]
    window: Option<String>,
    /// Log-normal mixture components.
    #[arg(long)]
    components: Option<usize>,
    /// K-means clusters (inductive).
    #[arg(long)]
    clusters: Option<usize>,
    /// KL weight (inductive).
    #[arg(long)]
    beta: Option<f64>,
    /// Edges to emit; 0 matches the source.
    #[arg(long)]
    target_edges: Option<usize>,
    /// Nodes to generate (inductive); 0 matches the source.
    #[arg(long)]
    target_nodes: Option<usize>,
    /// `at` or `upto`.
    #[arg(long)]
    snapshot_mode: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Any other config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Source edge list (`source,target,timestamp`).
    #[arg(long)]
    input: PathBuf,
    /// Run directory for the checkpoint and its companions.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// The edge list the model was trained on.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Generated edge list; sidecars are written next to it.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Source edge list.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    generated: PathBuf,
    /// Report directory.
    #[arg(long)]
    output: PathBuf,
    /// `at` or `upto`.
    #[arg(long, default_value = "at")]
    snapshot_mode: String,
    /// `shared` or `disjoint`; read from the provenance sidecar when omitted.
    #[arg(long)]
    node_identity: Option<String>,
}

#[derive(Args, Debug)]
pub struct WalksArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Walks to draw from uniform start edges; 0 means one per edge.
    #[arg(long, default_value_t = 0)]
    count: usize,
    #[command(flatten)]
    cfg: ConfigArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: cannot size thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Generate(a) => commands::generate(&a),
        Command::Evaluate(a) => commands::evaluate(&a),
        Command::Walks(a) => commands::walks(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}
