//! `memsum`: preprocess, build-vocab, train, evaluate, summarize, rouge.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "memsum", version, about = "Memory-augmented abstractive summarization")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

/// Flags accepted by every command. They override the config file, which
/// overrides the built-in defaults.
#[derive(Args, Debug, Default)]
struct Shared {
    /// key=value run configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// vanilla, improved or hier
    #[arg(long, global = true)]
    variant: Option<String>,
    /// plain or factored
    #[arg(long, global = true)]
    mode: Option<String>,
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    /// Pretrained vectors, one `token v1 .. v_dim` per line
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output file of the command
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// mle or rl
    #[arg(long, global = true)]
    train_mode: Option<String>,
    /// Checkpoint to start from; required for rl
    #[arg(long, global = true)]
    init_checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    lr_mle: Option<f64>,
    /// Drop to 1e-5 manually when rl training plateaus
    #[arg(long, global = true)]
    lr_rl: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Any config key, e.g. `--set batch_size=8`; repeatable
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate, tokenize and truncate a raw `article<TAB>summary` corpus
    Preprocess {
        /// Raw corpus
        input: PathBuf,
    },
    /// Build a frequency-ranked vocabulary from a corpus
    BuildVocab {
        /// Training corpus
        input: PathBuf,
    },
    /// Teacher-forced or self-critical training
    Train {
        /// Training corpus (else `train=` from the config)
        #[arg(long)]
        train: Option<PathBuf>,
        /// Dev corpus for model selection
        #[arg(long)]
        dev: Option<PathBuf>,
    },
    /// Greedy-decode a corpus and report ROUGE F1
    Evaluate {
        /// Test corpus (else `test=` from the config)
        input: Option<PathBuf>,
    },
    /// Print greedy summaries for the articles of a file
    Summarize {
        /// One article per line, optionally followed by TAB and a summary
        input: PathBuf,
    },
    /// Score candidate lines against reference lines
    Rouge {
        references: PathBuf,
        candidates: PathBuf,
    },
}

impl Shared {
    /// Defaults, then the config file, then flags.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got {kv:?}"))?;
            cfg.set(k.trim(), v)?;
        }
        let text = |k: &str, v: &Option<String>, cfg: &mut RunConfig| v.as_deref().map_or(Ok(()), |v| cfg.set(k, v));
        text("variant", &self.variant, &mut cfg)?;
        text("mode", &self.mode, &mut cfg)?;
        text("train_mode", &self.train_mode, &mut cfg)?;
        let shown = |v: Option<String>, k: &str, cfg: &mut RunConfig| v.map_or(Ok(()), |v| cfg.set(k, &v));
        shown(self.seed.map(|x| x.to_string()), "seed", &mut cfg)?;
        shown(self.lr_mle.map(|x| x.to_string()), "lr_mle", &mut cfg)?;
        shown(self.lr_rl.map(|x| x.to_string()), "lr_rl", &mut cfg)?;
        shown(self.epochs.map(|x| x.to_string()), "epochs", &mut cfg)?;
        for (k, p) in [
            ("vocab", &self.vocab),
            ("embeddings", &self.embeddings),
            ("checkpoint", &self.checkpoint),
            ("init_checkpoint", &self.init_checkpoint),
        ] {
            if let Some(p) = p {
                cfg.set(k, &p.to_string_lossy())?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = cli.shared.resolve()?;
    let out = cli.shared.out.as_deref();
    match cli.command {
        Command::Preprocess { input } => commands::preprocess(&cfg, &input, out),
        Command::BuildVocab { input } => commands::build_vocab(&cfg, &input, out),
        Command::Train { train, dev } => {
            for (k, p) in [("train", train), ("dev", dev)] {
                if let Some(p) = p {
                    cfg.set(k, &p.to_string_lossy())?;
                }
            }
            commands::train(&cfg)
        }
        Command::Evaluate { input } => {
            if let Some(p) = input {
                cfg.set("test", &p.to_string_lossy())?;
            }
            commands::evaluate(&cfg, out)
        }
        Command::Summarize { input } => commands::summarize(&cfg, &input),
        Command::Rouge { references, candidates } => commands::rouge(&references, &candidates, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
