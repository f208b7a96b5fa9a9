use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use creditrd_core::pipeline::{cmd_scale, run_all, run_stage, PipelineConfig, Stage, StageRun};
use creditrd_core::{Error, Result};

/// Simulate, scan, build shares, estimate and report.
#[derive(Debug, Parser)]
#[command(name = "creditrd", version)]
struct Cli {
    /// JSON pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// simulate, scan, shares, estimate, report, all, or scale (streamed
    /// scan of the configured world without writing the credit panel).
    #[arg(long, default_value = "all")]
    stage: String,
    /// Headline bandwidth for the estimate tables.
    #[arg(long)]
    bandwidth: Option<i32>,
    /// Comma-separated election years to keep in estimation.
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<i32>>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (also the default location of stage inputs).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::from_json_file(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(b) = cli.bandwidth {
        cfg.estimation.bandwidth = b;
        if !cfg.bandwidths.contains(&b) {
            cfg.bandwidths.push(b);
            cfg.bandwidths.sort_unstable();
        }
    }
    if let Some(y) = &cli.years {
        cfg.estimation.years = Some(y.clone());
        cfg.estimation.gerrymander_window = false;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_run(run: &StageRun) {
    println!("{}:", run.stage.name());
    for p in &run.outputs {
        println!("  {}", p.display());
    }
    println!("  {}", run.manifest.display());
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    match cli.stage.as_str() {
        "all" => run_all(&cfg, Stage::Simulate)?.iter().for_each(print_run),
        "scale" => {
            let (run, summary) = cmd_scale(&cfg)?;
            print_run(&run);
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).map_err(Error::from)?
            );
        }
        name => print_run(&run_stage(&cfg, name.parse()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
