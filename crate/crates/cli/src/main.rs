use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use cfexplain_client::HttpBackend;
use cfexplain_core::llm::{CompletionBackend, MockBackend};
use cfexplain_core::pipeline::{self, BackendKind, RunConfig};
use clap::{Parser, Subcommand, ValueEnum};

/// Counterfactual explanations for a GCN node classifier, verbalized by a
/// language model and scored by exact match.
#[derive(Parser)]
#[command(name = "cfexplain", version)]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dotted override, e.g. `--set train.epochs=100` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[arg(long, value_enum, global = true)]
    backend: Option<Backend>,
    /// Seed for the split, training, node selection and mock backend.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Mock,
    Live,
}

#[derive(Subcommand)]
enum Command {
    /// Train the oracle and write the checkpoint and history.
    Train,
    /// Sample correctly classified nodes and search for counterfactuals.
    Explain,
    /// Prompt, query, parse and score every counterfactual, then report.
    Run,
    /// Render the table and the human-evaluation export from a run log.
    Report {
        /// Defaults to `<output_dir>/runs.jsonl`.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Defaults to the log's directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as JSON.
    Config,
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => RunConfig::default(),
    };
    let mut cfg = base.with_overrides(&cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    if let Some(b) = cli.backend {
        cfg.backend = match b {
            Backend::Mock => BackendKind::Mock,
            Backend::Live => BackendKind::Live,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn backend(cfg: &RunConfig) -> Result<Box<dyn CompletionBackend>> {
    Ok(match cfg.backend {
        BackendKind::Mock => Box::new(MockBackend::new(cfg.corruption.clone(), cfg.mock_seed)?),
        BackendKind::Live => Box::new(HttpBackend::new(cfg.llm.clone())?),
    })
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Train => {
            let s = pipeline::cmd_train(&cfg)?;
            println!(
                "train accuracy {:.4}, test accuracy {:.4} ({} ms)",
                s.train_accuracy, s.test_accuracy, s.elapsed_ms
            );
            println!("checkpoint: {}", s.checkpoint.display());
        }
        Command::Explain => {
            let s = pipeline::cmd_explain(&cfg)?;
            if s.clamped {
                eprintln!(
                    "warning: sample_size {} clamped to the {} correctly classified nodes",
                    cfg.sample_size, s.eligible
                );
            }
            println!(
                "{} targets, {} attempts, {} counterfactuals found (rate {:.3})",
                s.sampled,
                s.attempts,
                s.found,
                s.found_rate()
            );
            println!("log: {}", cfg.path(pipeline::EXPLAIN_LOG).display());
        }
        Command::Run => {
            let b = backend(&cfg)?;
            let s = pipeline::cmd_run(&cfg, b.as_ref())?;
            println!(
                "queried {}, resumed past {}, backend errors {}",
                s.queried, s.skipped_existing, s.backend_errors
            );
            print!("{}", s.report);
        }
        Command::Report { log, out } => {
            let log = log.clone().unwrap_or_else(|| cfg.path(pipeline::RUN_LOG));
            let out = match out {
                Some(o) => o.clone(),
                None => log.parent().map(PathBuf::from).unwrap_or_default(),
            };
            if !log.exists() {
                bail!("run log {} does not exist", log.display());
            }
            let r = pipeline::cmd_report(&log, &out)?;
            print!("{}", r.markdown);
            println!("\nexported {} explanations for human evaluation", r.exported.len());
        }
        Command::Config => println!("{}", serde_json::to_string_pretty(&cfg)?),
    }
    Ok(())
}
