use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use editnet_cli::{cmd_evaluate, cmd_ingest, cmd_label, cmd_summarize, cmd_train, ExperimentConfig, Overrides};

#[derive(Parser, Debug)]
#[command(author, version, about = "Mixed extractive-abstractive summarization experiments", long_about = None)]
struct Cli {
    /// Experiment config (TOML); flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for labeling and gradients
    #[arg(long, env = "EDITNET_WORKERS", default_value_t = 1, global = true)]
    workers: usize,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a dataset and rewrite it in canonical form
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Precompute oracle soft labels for every configured split
    Label,
    /// Train the editor from cached labels
    Train,
    /// Edit one document (one sentence per line) and print the annotated summary
    Summarize {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        document: PathBuf,
    },
    /// Score a checkpoint on a test set and write report.json
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let resolve = || ExperimentConfig::resolve(cli.config.as_deref(), &cli.overrides);
    match &cli.command {
        Command::Ingest { input, output } => {
            let report = cmd_ingest(input, output)?;
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Label => {
            let report = cmd_label(&resolve()?, cli.workers)?;
            for s in &report.splits {
                eprintln!(
                    "{}: labeled {}/{} in {:.2}s, {} skipped",
                    s.split.name(),
                    s.labeled,
                    s.examples,
                    s.seconds,
                    s.failures.len()
                );
                for f in &s.failures {
                    eprintln!("  {} (record {}): {}", f.id, f.index, f.reason);
                }
            }
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Train => {
            let summary = cmd_train(&resolve()?, cli.workers)?;
            println!("{}", serde_json::to_string(&summary)?);
        }
        Command::Summarize { checkpoint, document } => {
            let out = cmd_summarize(&resolve()?, checkpoint, document)?;
            print!("{}", out.render());
        }
        Command::Evaluate { checkpoint } => {
            let config = resolve()?;
            let report = cmd_evaluate(&config, checkpoint, None)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
