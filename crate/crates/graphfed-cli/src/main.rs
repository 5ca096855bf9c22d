use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use graphfed_cli::config::{parse_config, ExperimentConfig};
use graphfed_cli::pipeline;

#[derive(Parser)]
#[command(name = "graphfed", about = "Federated graph transformer experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (JSON); unset fields use training defaults.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Client count, overriding the config.
    #[arg(long)]
    clients: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split the dataset into client subgraphs and report statistics.
    Partition(CommonArgs),
    /// Precompute diffusion and positional-encoding matrices per client.
    Preprocess(CommonArgs),
    /// Run the federated training loop and write history/summary files.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Also write per-round similarity and mixing-weight matrices.
        #[arg(long)]
        dump_similarity: bool,
    },
    /// Numerical checks of the attention substitution results.
    Theory {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild summary and plot-ready curves from existing artifacts.
    Report(CommonArgs),
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(clients) = common.clients {
        cfg.partition.clients = clients;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Partition(common) => pipeline::cmd_partition(&load(&common)?),
        Cmd::Preprocess(common) => pipeline::cmd_preprocess(&load(&common)?),
        Cmd::Train {
            common,
            dump_similarity,
        } => {
            let mut cfg = load(&common)?;
            cfg.dump_similarity |= dump_similarity;
            pipeline::cmd_train(&cfg)
        }
        Cmd::Theory { seed, out } => pipeline::cmd_theory(seed, out.as_deref()),
        Cmd::Report(common) => pipeline::cmd_report(&load(&common)?),
    }
}
