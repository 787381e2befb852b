//! `redraw`: synthetic data, training, clustering, redrawing and evaluation
//! from one TOML config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use redraw_core::pipeline::{self, RunConfig};
use redraw_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "redraw", version, about = "Context-aware redrawing of character eyes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run config; every key is optional.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the corpus root.
    #[arg(long, global = true, value_name = "DIR")]
    corpus: Option<PathBuf>,
    /// Log progress (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic corpus and demo scene.
    Synth,
    /// Train the style encoder and embed the corpus.
    TrainEncoder {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Train the redrawer against the quality and context discriminators.
    TrainRedrawer {
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Cluster an embeddings file.
    Cluster {
        #[arg(long, value_name = "PATH")]
        embeddings: Option<PathBuf>,
        /// Dendrogram cut height (default: best silhouette).
        #[arg(long)]
        cut: Option<f64>,
    },
    /// Redraw the manifest's regions from the color guide.
    Redraw {
        #[arg(long, value_name = "PATH")]
        manifest: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        guide: Option<PathBuf>,
        /// Force a frame design onto a guide design.
        #[arg(long = "pair", value_name = "FRAME=GUIDE")]
        pairs: Vec<String>,
    },
    /// Score the trained redrawer on fresh samples.
    Eval {
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(root) = &cli.common.corpus {
        cfg.corpus_root = root.clone();
    }
    match &cli.command {
        Command::Synth => {}
        Command::TrainEncoder { steps } => cfg.encoder.steps = steps.unwrap_or(cfg.encoder.steps),
        Command::TrainRedrawer { steps } => cfg.redrawer.steps = steps.unwrap_or(cfg.redrawer.steps),
        Command::Cluster { embeddings, cut } => {
            if embeddings.is_some() {
                cfg.cluster.embeddings = embeddings.clone();
            }
            if cut.is_some() {
                cfg.cluster.cut = *cut;
            }
        }
        Command::Redraw { manifest, guide, pairs } => {
            if manifest.is_some() {
                cfg.redraw.manifest = manifest.clone();
            }
            if guide.is_some() {
                cfg.redraw.guide = guide.clone();
            }
            for p in pairs {
                let (a, b) = p
                    .split_once('=')
                    .ok_or_else(|| Error::Validation(format!("--pair expects FRAME=GUIDE, got {p:?}")))?;
                cfg.redraw.pairings.insert(a.to_string(), b.to_string());
            }
        }
        Command::Eval { samples } => cfg.eval.samples = samples.unwrap_or(cfg.eval.samples),
    }
    let seed = cli.common.seed.unwrap_or(cfg.seed);
    let cfg = cfg.with_seed(seed);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<String> {
    let cfg = config(cli)?;
    Ok(match cli.command {
        Command::Synth => pipeline::cmd_synth(&cfg)?.to_string(),
        Command::TrainEncoder { .. } => pipeline::cmd_train_encoder(&cfg)?.to_string(),
        Command::TrainRedrawer { .. } => pipeline::cmd_train_redrawer(&cfg)?.to_string(),
        Command::Cluster { .. } => pipeline::cmd_cluster(&cfg)?.to_string(),
        Command::Redraw { .. } => pipeline::cmd_redraw(&cfg)?.to_string(),
        Command::Eval { .. } => {
            let e = pipeline::cmd_eval(&cfg)?;
            format!(
                "L_R {:.6}, high-frequency win rate {:.3}, Q score t {:.4} vs l {:.4}",
                e.reconstruction, e.hf_win_rate, e.quality_score_t, e.quality_score_l
            )
        }
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage problems are validation errors; help and version are not errors.
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
