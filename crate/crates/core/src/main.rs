use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use aif_core::config::RunConfig;
use aif_core::error::Result;
use aif_core::pipeline::{self, Report};
use aif_core::prior::PriorMode;

#[derive(Parser)]
#[command(name = "aif", version, about = "Active-inference agent pipeline for noisy mountain car")]
struct Cli {
    /// TOML run config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run directory holding every artifact and report.
    #[arg(long, global = true, default_value = "aif-run")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record random-agent episodes.
    Collect,
    /// Record scripted-expert demonstrations.
    RecordExpert,
    /// Train the latent world model on the random episodes.
    TrainModel,
    /// Build a preferred-state prior.
    BuildPrior {
        #[arg(long)]
        mode: Option<PriorMode>,
        #[arg(long)]
        threshold: Option<usize>,
    },
    /// Score a candidate population from the valley start.
    PlanEval {
        #[arg(long)]
        mode: Option<PriorMode>,
    },
    /// Train the habit policy on expected free energy.
    TrainPolicy,
    /// Evaluate the habit policy and the baselines.
    Evaluate,
    /// Write plot-data series under <out>/plots.
    ExportPlots,
    /// Run every stage in order.
    Reproduce,
}

fn describe(r: &Report) -> String {
    let keys: Vec<String> = r
        .metrics
        .iter()
        .filter(|(_, v)| !matches!(v, toml::Value::Array(_)))
        .take(6)
        .map(|(k, v)| format!("{k}={v}"))
        .collect();
    format!("{}: {}", r.stage, keys.join(" "))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out: &Path = &cli.out;
    let started = Instant::now();
    let report = match cli.command {
        Command::Collect => pipeline::collect(&cfg, out)?,
        Command::RecordExpert => pipeline::record_expert(&cfg, out)?,
        Command::TrainModel => pipeline::train_model(&cfg, out)?,
        Command::BuildPrior { mode, threshold } => pipeline::build_prior(
            &cfg,
            out,
            mode.unwrap_or(cfg.prior.mode),
            threshold.unwrap_or(cfg.prior.threshold),
        )?,
        Command::PlanEval { mode } => pipeline::plan_eval(&cfg, out, mode.unwrap_or(cfg.prior.mode))?,
        Command::TrainPolicy => pipeline::train_policy_stage(&cfg, out)?,
        Command::Evaluate => pipeline::evaluate(&cfg, out)?,
        Command::ExportPlots => pipeline::export_plots(&cfg, out)?,
        Command::Reproduce => pipeline::reproduce(&cfg, out, |r| eprintln!("{}", describe(r)))?,
    };
    println!("{}", describe(&report));
    eprintln!("done in {:.1}s", started.elapsed().as_secs_f64());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("aif: error: {}", e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
