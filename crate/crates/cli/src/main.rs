use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use spattn::experiment::{synth, Run, Stage};
use spattn::ExperimentConfig;

#[derive(Parser)]
#[command(name = "spattn", version, about = "Attention interpretability experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Defaults to the bundled smoke config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: runs/<config name>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Concurrent training jobs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured model and seed; writes metrics.csv and checkpoints.
    Train(Common),
    /// Correlation and entropy analysis of trained checkpoints.
    Analyze(Common),
    /// Sparsity sweep over sparsegen lambdas.
    Sweep(Common),
    /// Adversarial attention against the trained base models.
    Adversarial(Common),
    /// Render SVG plots from the CSVs in the output directory.
    Report(Common),
    /// Write the configured dataset as JSONL.
    Synth(Common),
    /// Every stage in order.
    Run(Common),
}

fn load(common: &Common) -> Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, base) = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let cfg = ExperimentConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?;
            (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ExperimentConfig::smoke(), PathBuf::from(".")),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
        if let Some(s) = &mut cfg.sweep {
            s.seeds = None;
        }
    }
    Ok((cfg, base))
}

fn run(cli: Cli) -> Result<()> {
    let (common, stage) = match &cli.command {
        Command::Train(c) => (c, Some(Stage::Train)),
        Command::Analyze(c) => (c, Some(Stage::Analyze)),
        Command::Sweep(c) => (c, Some(Stage::Sweep)),
        Command::Adversarial(c) => (c, Some(Stage::Adversarial)),
        Command::Report(c) => (c, Some(Stage::Report)),
        Command::Synth(c) | Command::Run(c) => (c, None),
    };
    let (cfg, base) = load(common)?;
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    if let Command::Synth(_) = cli.command {
        let path = synth(&cfg, &base, &out)?;
        println!("{}", path.display());
        return Ok(());
    }
    let run = Run::new(cfg, base, out.clone(), common.jobs);
    match stage {
        Some(s) => run.stage(s)?,
        None => run.all()?,
    }
    println!("{}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
