//! `mulcom`: synthesize data, train, evaluate, and inspect trope detectors.
//!
//! Exit codes: 0 success, 1 runtime failure (including a failed gradient
//! check), 2 bad flags or configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mulcom::data::Split;
use mulcom::streams::StreamKind;

use crate::config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    /// Classifies a library error: configuration problems are usage errors.
    pub fn from_core(e: mulcom::Error) -> Self {
        match e {
            mulcom::Error::Config(_) | mulcom::Error::Usage(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }

    pub fn usage(e: mulcom::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<mulcom::Error> for CliError {
    fn from(e: mulcom::Error) -> Self {
        CliError::from_core(e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "mulcom", version, about = "Multi-label trope detection with multi-level comprehension streams")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory for artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads; 1 (the default) gives bit-reproducible runs.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a planted synthetic dataset.
    Synth {
        #[arg(long)]
        docs: Option<usize>,
    },
    /// Train a model and write a checkpoint with its loss trace.
    Train {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, value_name = "LR")]
        learning_rate: Option<f64>,
        /// Comma-separated subset of word, sentence, relation.
        #[arg(long, value_delimiter = ',')]
        streams: Option<Vec<StreamKind>>,
    },
    /// Score a split and report F1, mAP and per-trope metrics.
    Eval {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// JSON scores file used instead of a checkpoint.
        #[arg(long, value_name = "PATH")]
        scores: Option<PathBuf>,
        #[arg(long)]
        split: Option<Split>,
        #[arg(long, value_name = "N")]
        baseline_trials: Option<usize>,
    },
    /// Corpus statistics and trope prevalence per split.
    Stats {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
    },
    /// Finite-difference gradient check of every model component.
    Gradcheck,
    /// Trope co-occurrence ranking by IoU.
    Cooccur {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        top_k: Option<usize>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(cli.common.config.as_deref())?;
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.common.out {
        cfg.out = o.clone();
    }
    if let Some(t) = cli.common.threads {
        cfg.threads = t;
    }
    match &cli.command {
        Command::Synth { docs } => {
            if let Some(d) = docs {
                cfg.synth.docs = *d;
            }
        }
        Command::Train {
            manifest,
            epochs,
            learning_rate,
            streams,
        } => {
            set(&mut cfg.manifest, manifest);
            if let Some(e) = epochs {
                cfg.train.epochs = *e;
            }
            if let Some(lr) = learning_rate {
                cfg.train.learning_rate = *lr;
            }
            if let Some(s) = streams {
                cfg.model.streams = s.clone();
            }
        }
        Command::Eval {
            manifest,
            checkpoint,
            scores,
            split,
            baseline_trials,
        } => {
            set(&mut cfg.manifest, manifest);
            set(&mut cfg.checkpoint, checkpoint);
            set(&mut cfg.scores, scores);
            if let Some(s) = split {
                cfg.split = *s;
            }
            if let Some(n) = baseline_trials {
                cfg.baseline_trials = *n;
            }
        }
        Command::Stats { manifest } => set(&mut cfg.manifest, manifest),
        Command::Cooccur { manifest, top_k } => {
            set(&mut cfg.manifest, manifest);
            if let Some(k) = top_k {
                cfg.top_k = *k;
            }
        }
        Command::Gradcheck => {}
    }
    cfg.finish()
}

fn set(slot: &mut Option<PathBuf>, flag: &Option<PathBuf>) {
    if flag.is_some() {
        slot.clone_from(flag);
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = resolve(cli)?;
    mulcom::exec::init_threads(cfg.threads)?;
    match cli.command {
        Command::Synth { .. } => commands::synth(&cfg),
        Command::Train { .. } => commands::train(&cfg),
        Command::Eval { .. } => commands::eval(&cfg),
        Command::Stats { .. } => commands::stats(&cfg),
        Command::Gradcheck => commands::gradcheck(&cfg),
        Command::Cooccur { .. } => commands::cooccur(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
