use std::path::PathBuf;

use anyhow::{Context, Result};
use bargain::harness::{verify_report, ExperimentConfig, Pipeline, StageOutput};
use bargain::tom::TomMode;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

/// Negotiation experiments: corpora, SL/RL/ToM training and evaluation.
#[derive(Parser)]
#[command(name = "bargain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); omitted tables keep their defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's run directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Population self-play corpus; with --tom, also the ToM training corpus.
    GenCorpus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tom: bool,
    },
    /// Supervised dialog manager.
    TrainSl(Common),
    /// Actor-critic dialog manager.
    TrainRl(Common),
    /// Identifier and both transition models.
    TrainTom(Common),
    /// Actor-critic fine-tuning under the ToM policy, with the paired check.
    FinetuneTom(Common),
    /// Every manager against the cooperative, competitive and mixed columns.
    Evaluate(Common),
    /// Full pipeline: all stages, evaluation and the summary report.
    Run(Common),
    /// Recomputes every aggregate of a run from its transcripts.
    VerifyReport {
        #[arg(long)]
        run_dir: PathBuf,
    },
    /// Identifier embeddings of a transcript file (default: held-out dialogs).
    DumpEmbeddings {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Prints the default config as TOML.
    DefaultConfig,
}

fn pipeline(common: &Common) -> Result<Pipeline> {
    let mut config = match &common.config {
        Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(Pipeline::new(config)?)
}

fn stage_line(out: &StageOutput) {
    let status = if out.reused { "cached" } else { "built" };
    println!("{:<20} {status:<6} {}", out.stage, out.dir.display());
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::GenCorpus { common, tom } => {
            let p = pipeline(&common)?;
            p.recording("gen-corpus", |p| {
                stage_line(&p.corpus()?);
                if tom {
                    stage_line(&p.tom_corpus()?);
                }
                Ok(())
            })?;
        }
        Command::TrainSl(common) => {
            let p = pipeline(&common)?;
            p.recording("train-sl", |p| p.sl().map(|o| stage_line(&o)))?;
        }
        Command::TrainRl(common) => {
            let p = pipeline(&common)?;
            p.recording("train-rl", |p| p.rl().map(|o| stage_line(&o)))?;
        }
        Command::TrainTom(common) => {
            let p = pipeline(&common)?;
            let summary = p.recording("train-tom", |p| {
                stage_line(&p.identifier()?);
                let t = &p.config.transition;
                let mut reports = Vec::new();
                for mode in [TomMode::Implicit, TomMode::Explicit] {
                    for f in [t.data_fraction, t.reduced_fraction] {
                        stage_line(&p.transition(mode, f)?);
                        reports.push(p.transition_summary(mode, f)?);
                    }
                }
                Ok((p.identifier_summary()?, reports))
            })?;
            print_json(&summary)?;
        }
        Command::FinetuneTom(common) => {
            let p = pipeline(&common)?;
            let summary = p.recording("finetune-tom", |p| {
                stage_line(&p.finetune()?);
                p.finetune_summary()
            })?;
            print_json(&summary)?;
        }
        Command::Evaluate(common) => {
            let p = pipeline(&common)?;
            let report = p.recording("evaluate", |p| p.evaluate())?;
            print!("{}", report.to_csv()?);
        }
        Command::Run(common) => {
            let p = pipeline(&common)?;
            let summary = p.recording("run", |p| p.run())?;
            print!("{}", summary.evaluation.to_csv()?);
            println!("reports in {}", p.config.output_dir.join("reports").display());
        }
        Command::VerifyReport { run_dir } => {
            let report = verify_report(&run_dir, bargain::generator::TemplateBank::builtin())
                .with_context(|| format!("verifying {}", run_dir.display()))?;
            println!("ok: {} rows recomputed from transcripts", report.rows.len());
        }
        Command::DumpEmbeddings { common, transcripts, out } => {
            let p = pipeline(&common)?;
            let n = p.recording("dump-embeddings", |p| {
                let episodes = match &transcripts {
                    Some(path) => p.load_episodes(path)?,
                    None => p.holdout_episodes()?,
                };
                p.dump_embeddings(&episodes, &out)
            })?;
            println!("{n} embeddings written to {}", out.display());
        }
        Command::DefaultConfig => print!("{}", ExperimentConfig::default().to_toml()),
    }
    Ok(())
}

