use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use impact_cli::config::{RunConfig, CONFIG_ENV};
use impact_cli::pipeline::{compare_files, read_weights, write_report, Pipeline, Stage};

#[derive(Parser)]
#[command(name = "impact", version, about = "Calibrate and validate order-book impact models")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    ell_max: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic event stream from the [generate] section.
    Generate,
    /// Classify raw book updates into signed events.
    Classify,
    /// Check the event stream invariants.
    Validate,
    /// Estimate P, C, Pi, R and S.
    Estimate,
    /// Calibrate the transient-impact propagators.
    CalibrateTim,
    /// Calibrate the history-dependent kernels.
    CalibrateHdim,
    /// Fit a global kernel scale by replaying the stream.
    RefineScale,
    /// Closed-form diffusion curves.
    PredictD,
    /// Replay the stream through a calibrated model.
    Simulate,
    /// Compare diffusion curves with the empirical one, or two files given explicitly.
    Compare {
        #[arg(requires = "reference")]
        candidate: Option<PathBuf>,
        reference: Option<PathBuf>,
        /// One weight per lag, one value per line.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Check that every artifact survives a read/write round trip.
    Roundtrip,
    /// Run several stages in dependency order.
    Run {
        /// Comma-separated stages; defaults to `stages` in the config.
        #[arg(long, value_delimiter = ',')]
        stages: Vec<Stage>,
    },
}

fn load_config(global: &Global) -> Result<RunConfig> {
    let Some(path) = &global.config else {
        bail!("no config given; pass --config or set {CONFIG_ENV}");
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(ell) = global.ell_max {
        cfg.ell_max = ell;
        if cfg.kernel_len.is_some_and(|l| l > ell) {
            cfg.kernel_len = Some(ell);
        }
    }
    if let Some(dir) = &global.out_dir {
        cfg.paths.out_dir = dir.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let stages = match cli.command {
        Command::Compare {
            candidate: Some(a),
            reference: Some(b),
            weights,
        } => {
            let weights = weights.as_deref().map(read_weights).transpose()?;
            let report = compare_files(&a, &b, weights.as_deref())?;
            return write_report(&mut std::io::stdout().lock(), &report);
        }
        Command::Generate => vec![Stage::Generate],
        Command::Classify => vec![Stage::Classify],
        Command::Validate => vec![Stage::Validate],
        Command::Estimate => vec![Stage::Estimate],
        Command::CalibrateTim => vec![Stage::CalibrateTim],
        Command::CalibrateHdim => vec![Stage::CalibrateHdim],
        Command::RefineScale => vec![Stage::RefineScale],
        Command::PredictD => vec![Stage::PredictD],
        Command::Simulate => vec![Stage::Simulate],
        Command::Compare { .. } => vec![Stage::Compare],
        Command::Roundtrip => vec![Stage::Roundtrip],
        Command::Run { stages } => stages,
    };
    let cfg = load_config(&cli.global)?;
    let stages = if stages.is_empty() { cfg.stages.clone() } else { stages };
    if stages.is_empty() {
        bail!("no stages to run; pass --stages or set `stages` in the config");
    }
    let mut pipeline = Pipeline::new(cfg);
    let outcome = pipeline.run(&stages);
    for line in &pipeline.log {
        println!("{line}");
    }
    outcome
}
