use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use hydroquant::calibrate::synth_catchment;
use hydroquant::config::PipelineConfig;
use hydroquant::gr4j::{Gr4jParams, Gr4jSetup};
use hydroquant::pipeline::{discover_stations, run_all, run_stage, Stage};

/// GR4J calibration, quantile ensembles and flood-risk reports.
#[derive(Parser)]
#[command(name = "hydroquant", version)]
struct Cli {
    /// Print the default configuration and exit.
    #[arg(long)]
    print_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Restrict to one station (default: all configured stations).
    #[arg(long)]
    station: Option<String>,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Load, audit, impute and split station data.
    Ingest(Common),
    /// Calibrate GR4J by differential evolution on the training split.
    Calibrate(Common),
    /// Build feature windows and train the quantile ensemble.
    Train(Common),
    /// Forecast the test split.
    Predict(Common),
    /// Score test forecasts.
    Evaluate(Common),
    /// Fit GEV thresholds and write flood-risk and TPR reports.
    FloodRisk(Common),
    /// Run every stage for every station.
    RunAll(Common),
    /// Write synthetic station CSVs driven by a known GR4J parameter set.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2)]
        stations: usize,
        #[arg(long, default_value_t = 3650)]
        days: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
    },
}

fn load_config(c: &Common) -> anyhow::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &c.out {
        cfg.output_dir = out.clone();
    }
    if let Some(s) = &c.station {
        cfg.data.stations = vec![s.clone()];
    }
    Ok(cfg)
}

fn stage_for_stations(c: &Common, stage: Stage) -> anyhow::Result<()> {
    let cfg = load_config(c)?;
    let stations = discover_stations(&cfg)?;
    let results: Vec<_> = stations
        .par_iter()
        .map(|s| run_stage(&cfg, s, stage))
        .collect();
    for r in results {
        r?;
    }
    Ok(())
}

fn synth(out: &Path, stations: usize, days: usize, seed: u64, noise: f64) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)?;
    let catchments = [
        Gr4jParams::new(320.0, -0.8, 85.0, 1.9)?,
        Gr4jParams::new(650.0, 0.6, 140.0, 3.2)?,
        Gr4jParams::new(180.0, -2.0, 45.0, 1.2)?,
    ];
    for i in 0..stations {
        let id = format!("syn_{}", (b'a' + (i % 26) as u8) as char);
        let setup = Gr4jSetup::new(catchments[i % catchments.len()]);
        let series = synth_catchment(&id, &setup, days, seed.wrapping_add(i as u64), noise)?;
        let path = out.join(format!("{id}.csv"));
        let f =
            std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        series.write_csv(std::io::BufWriter::new(f))?;
        println!("{}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if cli.print_defaults {
        print!("{}", PipelineConfig::defaults_toml());
        return Ok(());
    }
    let Some(command) = cli.command else {
        anyhow::bail!("no subcommand given; see --help");
    };
    match command {
        Command::Ingest(c) => stage_for_stations(&c, Stage::Ingest),
        Command::Calibrate(c) => stage_for_stations(&c, Stage::Calibrate),
        Command::Train(c) => stage_for_stations(&c, Stage::Train),
        Command::Predict(c) => stage_for_stations(&c, Stage::Predict),
        Command::Evaluate(c) => stage_for_stations(&c, Stage::Evaluate),
        Command::FloodRisk(c) => stage_for_stations(&c, Stage::FloodRisk),
        Command::RunAll(c) => {
            let m = run_all(&load_config(&c)?)?;
            println!(
                "{} station(s) done in {:.1}s; manifest in {}",
                m.stations.len(),
                m.total_seconds,
                m.output_dir.join("manifest.json").display()
            );
            Ok(())
        }
        Command::Synth {
            out,
            stations,
            days,
            seed,
            noise,
        } => synth(&out, stations, days, seed, noise),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
