use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graphtrip_cli::stages::{self, Ctx};
use graphtrip_cli::{CliResult, RunConfig};

#[derive(Parser)]
#[command(name = "graphtrip", version, about = "Graph-embedding triplet mining and encoder fine-tuning pipeline")]
struct Args {
    /// Run-config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the global seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root holding one directory per stage.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Fail when an upstream artifact no longer matches its manifest.
    #[arg(long, global = true)]
    strict: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic plants.
    Synth,
    /// Link enrichment, log filtering and context expansion.
    BuildGraph,
    /// Train graph embeddings for the training plants.
    TrainGe,
    /// Band-sample document triplets from the graph embeddings.
    SampleTriplets,
    /// Document-similarity fine-tuning on the triplets.
    TrainDocsim,
    /// Query-document pairs from triplets and the other sources.
    GenPairs,
    /// Bi-encoder training, one encoder per configured ablation.
    TrainBiencoder,
    /// Score every ablation's encoder on the benchmark.
    Evaluate,
    /// All stages in order.
    Pipeline,
    /// Print the resolved run config.
    PrintConfig,
}

fn run(args: &Args) -> CliResult<()> {
    let ctx = Ctx::new(args.config.as_deref(), args.seed, &args.out, args.strict)?;
    match args.cmd {
        Cmd::Synth => stages::cmd_synth(&ctx),
        Cmd::BuildGraph => stages::cmd_build_graph(&ctx),
        Cmd::TrainGe => stages::cmd_train_ge(&ctx),
        Cmd::SampleTriplets => stages::cmd_sample_triplets(&ctx),
        Cmd::TrainDocsim => stages::cmd_train_docsim(&ctx).map(|log| {
            println!("docsim loss {:.4} -> {:.4}", log.initial_loss, log.final_loss);
        }),
        Cmd::GenPairs => stages::cmd_gen_pairs(&ctx),
        Cmd::TrainBiencoder => stages::cmd_train_biencoder(&ctx),
        Cmd::Evaluate | Cmd::Pipeline => {
            let report = if matches!(args.cmd, Cmd::Pipeline) {
                stages::cmd_pipeline(&ctx)?
            } else {
                stages::cmd_evaluate(&ctx)?
            };
            print!("{}", report.table());
            Ok(())
        }
        Cmd::PrintConfig => {
            let cfg: &RunConfig = &ctx.config;
            println!("{}", serde_json::to_string_pretty(cfg)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
