use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kgprompt_cli::pipeline::report_text;
use kgprompt_cli::{evaluate_existing, run_until, ExperimentConfig, RunError, Stage};

/// Knowledge-graph structure as prompt context for pairwise causal
/// relation classification.
///
/// Every stage command runs the pipeline up to that stage and writes its
/// artifacts to the output directory. Exit codes: 0 success, 2 invalid
/// configuration or usage, 3 stage failure.
#[derive(Debug, Parser)]
#[command(name = "kgprompt", version)]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the cache directory of a remote knowledge graph.
    #[arg(long, global = true, value_name = "DIR")]
    cache: Option<PathBuf>,
    /// Serve remote knowledge-graph queries from the cache only.
    #[arg(long, global = true)]
    offline: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the knowledge graph; also writes it as graph.jsonl.
    Ingest,
    /// Link entity mentions to graph nodes.
    Link,
    /// Extract neighbor, common-neighbor or metapath structures.
    Extract,
    /// Render structures as text.
    Verbalize,
    /// Assemble and truncate prompts.
    BuildPrompts,
    /// Plan folds and draw few-shot samples.
    Split,
    /// Run the configured backend on every fold's test prompts.
    Predict,
    /// Score predictions already in the output directory.
    Eval,
    /// The whole pipeline.
    Run,
}

fn execute(cli: Cli) -> Result<String, RunError> {
    let Some(path) = cli.config else {
        return Err(kgprompt_cli::ConfigError::Invalid("--config is required".into()).into());
    };
    let mut cfg = ExperimentConfig::load(&path)?;
    cfg.apply_overrides(cli.seed, cli.out, cli.cache, cli.offline);
    let last = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Link => Stage::Link,
        Command::Extract => Stage::Extract,
        Command::Verbalize => Stage::Verbalize,
        Command::BuildPrompts => Stage::BuildPrompts,
        Command::Split => Stage::Split,
        Command::Predict => Stage::Predict,
        Command::Run => Stage::Eval,
        Command::Eval => {
            cfg.validate()?;
            return Ok(report_text(&evaluate_existing(&cfg)?));
        }
    };
    let summary = run_until(&cfg, last)?;
    let mut msg = format!(
        "{}: {} artifacts in {} (config {})\n",
        last,
        summary.manifest.artifacts.len(),
        summary.out_dir.display(),
        &summary.manifest.config_hash[..12]
    );
    if let Some(r) = &summary.report {
        msg.push_str(&report_text(r));
    }
    Ok(msg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(msg) => {
            print!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
