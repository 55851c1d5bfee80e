//! `dctree`: train, evaluate, check and inspect tree-structured encoders.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 bad configuration or
//! arguments, 3 data or checkpoint error, 4 numeric divergence, 5 gradient
//! check over tolerance, 6 analysis requested on a static checkpoint.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "dctree", version, about = "Dynamic compositional tree networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Run settings shared by every command that trains.
#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// `key = value` config file; flags given here override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub e: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub z: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model; writes `checkpoint.json` and `metrics.csv` to --out.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint; writes `predictions.jsonl` when --out is given.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare backprop against finite differences on random trees.
    Gradcheck {
        #[arg(long, default_value = "dc-treelstm")]
        variant: String,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        m: usize,
        #[arg(long, default_value_t = 2)]
        z: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        trees: usize,
        /// Negates the tanh derivative in the backward pass.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Train one model per z value and report dev accuracy.
    SweepZ {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated z values.
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20,25,30,35,40,45,50")]
        z_list: Vec<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Dump per-node z activations and heatmaps for a dynamic checkpoint.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 0)]
        neuron: usize,
        #[arg(long, default_value_t = 10)]
        top_n: usize,
        /// Rank by |z| instead of signed z.
        #[arg(long)]
        by_abs: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the parameter-count breakdown of a variant.
    CountParams {
        #[arg(long)]
        variant: String,
        #[arg(long)]
        d: usize,
        /// Defaults to d.
        #[arg(long)]
        e: Option<usize>,
        #[arg(long, default_value_t = 0)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        z: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train { run, out } => commands::train(&run, &out),
        Command::Eval {
            checkpoint,
            dataset,
            out,
        } => commands::eval(&checkpoint, &dataset, out.as_deref()),
        Command::Gradcheck {
            variant,
            d,
            m,
            z,
            seed,
            trees,
            inject_fault,
        } => commands::gradcheck(&variant, d, m, z, seed, trees, inject_fault),
        Command::SweepZ { run, z_list, out } => commands::sweep_z(&run, &z_list, &out),
        Command::Inspect {
            checkpoint,
            dataset,
            neuron,
            top_n,
            by_abs,
            out,
        } => commands::inspect(&checkpoint, &dataset, neuron, top_n, by_abs, &out),
        Command::CountParams { variant, d, e, m, z } => commands::count_params(&variant, d, e, m, z),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::exit_code(&err))
        }
    }
}
