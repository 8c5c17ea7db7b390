use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ksnr_cli::{run_experiment, Experiment, ExperimentConfig, Scale};

/// Run one Koopman-spectrum experiment and write its artifacts.
#[derive(Parser)]
#[command(name = "ksnr", version)]
struct Args {
    experiment: Experiment,
    /// JSON config; omitted fields take their table defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scale: Option<Scale>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(args: Args) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(exp) = cfg.experiment {
        if exp != args.experiment {
            log::warn!("config names experiment {}, running {}", exp.name(), args.experiment.name());
        }
    }
    cfg.experiment = Some(args.experiment);
    if let Some(s) = args.scale {
        cfg.scale = s;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    let cfg = cfg.resolve()?;
    let out = run_experiment(&cfg, args.experiment)?;
    out.artifacts.write_to(&cfg.out_dir)?;
    for (k, v) in &out.metrics {
        println!("{k} = {v}");
    }
    println!("wrote {} files to {}", out.artifacts.files.len(), cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
