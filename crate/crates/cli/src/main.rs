use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use pseudomask::{run_batch, PipelineConfig};
use pseudomask_harness::io::{evaluate_dirs, write_corpus};
use pseudomask_harness::{generate_corpus, SceneParams, Template};

#[derive(Parser)]
#[command(
    name = "pseudomask",
    version,
    about = "Unsupervised instance pseudo-masks from patch features and depth"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract pseudo-masks for every image listed in a manifest.
    Extract(ExtractArgs),
    /// Synthetic corpus generation and scoring.
    #[command(subcommand)]
    Harness(HarnessCommand),
}

#[derive(Args)]
struct ExtractArgs {
    /// JSON Lines file of {image, features, depth} paths, relative to its own directory.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value file; command line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    no_sharpen: bool,
    #[arg(long)]
    no_confidence: bool,
    #[arg(long)]
    no_crf: bool,
    #[arg(long)]
    overlays: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum HarnessCommand {
    /// Write a synthetic corpus with ground truth.
    Gen {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// adjacent-twins, single-blob, ramp-blob or blank.
        #[arg(long, default_value = "adjacent-twins")]
        template: Template,
    },
    /// Score an extraction directory against a generated corpus.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
}

fn resolve_config(args: &ExtractArgs) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            PipelineConfig::parse(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PipelineConfig::default(),
    };
    cfg.sharpening &= !args.no_sharpen;
    cfg.confidence &= !args.no_confidence;
    cfg.crf &= !args.no_crf;
    cfg.overlays |= args.overlays;
    if let Some(n) = args.workers {
        cfg.worker_count = n;
    }
    cfg.manifest = Some(args.manifest.clone());
    cfg.output_dir = Some(args.out.clone());
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Extract(args) => {
            let cfg = resolve_config(&args)?;
            let summary = run_batch(&args.manifest, &args.out, &cfg)?;
            for f in &summary.failures {
                log::warn!("{}: {}", f.image_id, f.error);
            }
            println!(
                "{} images, {} processed, {} masks, {} failures in {:.2}s",
                summary.images,
                summary.processed,
                summary.masks,
                summary.failures.len(),
                summary.wall_time_s
            );
        }
        Command::Harness(HarnessCommand::Gen {
            out,
            count,
            seed,
            template,
        }) => {
            let scenes = generate_corpus(seed, count, template, &SceneParams::default())?;
            let manifest = write_corpus(&out, &scenes)?;
            println!("{} scenes, manifest {}", scenes.len(), manifest.display());
        }
        Command::Harness(HarnessCommand::Eval { pred, gt }) => {
            let r = evaluate_dirs(&pred, &gt)?;
            let report = serde_json::json!({ "ap50": r.ap50, "ap_mean": r.ap_mean, "per_threshold": r.per_threshold });
            println!("{report}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
