use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tafenet::commands::{cmd_embed, cmd_eval, cmd_gensynth, cmd_train, BEST_CHECKPOINT};
use tafenet::config::{Overrides, RunConfig};
use tafenet::data::SyntheticConfig;
use tafenet::eval::Protocol;
use tafenet::Result;

#[derive(Parser)]
#[command(
    name = "tafenet",
    version,
    about = "Task-aware feature embeddings: train, evaluate, export"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write checkpoints and a per-epoch log.
    Train(Common),
    /// Evaluate a checkpoint under one or more protocols.
    Eval(WithCheckpoint),
    /// Export TAFEs and task embeddings.
    Embed(WithCheckpoint),
    /// Write a synthetic dataset as feature, task and split files.
    GenSynth(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Protocols to run (zsl, gzsl, composition, few-shot, shuffle); repeatable or comma separated.
    #[arg(long, value_delimiter = ',')]
    protocol: Vec<Protocol>,
    /// Single-threaded, bit-reproducible execution.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct WithCheckpoint {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to load; defaults to `best.ckpt` in the output directory.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl Common {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            out: self.out.clone(),
            protocols: self.protocol.clone(),
            deterministic: self.deterministic,
            threads: self.threads,
        });
        cfg.validate()?;
        tafenet::model::set_eval_threads(cfg.eval_threads());
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = c.run_config()?;
            let summary = cmd_train(&cfg)?;
            if let Some(r) = summary.log.last() {
                println!(
                    "epoch {}: cls {:.4} emb {:.4} total {:.4}",
                    r.epoch, r.cls_loss, r.emb_loss, r.total_loss
                );
            }
            println!("wrote {} and {}", summary.last.display(), summary.best.display());
        }
        Command::Eval(w) => {
            let cfg = w.common.run_config()?;
            let ckpt = w.checkpoint.unwrap_or_else(|| cfg.out.join(BEST_CHECKPOINT));
            for report in cmd_eval(&cfg, &ckpt)? {
                println!("{}", report.to_table());
            }
        }
        Command::Embed(w) => {
            let cfg = w.common.run_config()?;
            let ckpt = w.checkpoint.unwrap_or_else(|| cfg.out.join(BEST_CHECKPOINT));
            let (path, dump) = cmd_embed(&cfg, &ckpt)?;
            println!(
                "wrote {} TAFE rows and {} task rows to {}",
                dump.tafes.len(),
                dump.tasks.len(),
                path.display()
            );
        }
        Command::GenSynth(c) => {
            // the run seed is not required here; it only reseeds the generator
            let mut synth = match &c.config {
                Some(p) => RunConfig::load(p)?.synthetic.unwrap_or_default(),
                None => SyntheticConfig::default(),
            };
            if let Some(s) = c.seed {
                synth.seed = s;
            }
            let out = c.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
            let files = cmd_gensynth(&synth, &out)?;
            println!(
                "wrote {}, {}, {}",
                files.features.display(),
                files.tasks.display(),
                files.split.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
