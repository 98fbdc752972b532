//! Stage orchestration. Each stage reads only files written by earlier
//! stages under `<output_dir>/<station>/`, so any stage can be rerun alone.
//!
//! | stage        | writes                                                    |
//! |--------------|-----------------------------------------------------------|
//! | `ingest`     | `series.csv`, `split.json`                                |
//! | `calibrate`  | `calibration.json`                                        |
//! | `train`      | `windows_train.bin`, `ensemble.json`, `loss_q*.csv`       |
//! | `predict`    | `forecast.csv`, `forecast_diagnostics.json`               |
//! | `evaluate`   | `metrics.json`                                            |
//! | `flood-risk` | `gev.json`, `fri.csv`, `tpr.csv`                          |
//!
//! Every stage also refreshes the station's `manifest.json` with the config
//! hash, derived seeds and a SHA-256 of each artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{ensure, Context};
use chrono::NaiveDate;
use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{calibrate_gr4j, CalibrationResult};
use crate::config::{hex, PipelineConfig, SeedStream};
use crate::ensemble::{train_ensemble, QuantileEnsemble, QuantileForecast};
use crate::extremes::{
    annual_maxima, fit_gev, flood_labels_and_tpr, flood_risk, write_fri_csv, write_tpr_csv,
    FloodThreshold, FriRecord, GevFit, TprRecord,
};
use crate::features::{make_input_windows, make_windows, FeatureTable};
use crate::gr4j::{Gr4jParams, Gr4jSetup};
use crate::ingest::{audit_and_impute, load_station_file, split_index, ForcingSeries, GapReport};
use crate::metrics::MetricReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Calibrate,
    Train,
    Predict,
    Evaluate,
    FloodRisk,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingest,
        Stage::Calibrate,
        Stage::Train,
        Stage::Predict,
        Stage::Evaluate,
        Stage::FloodRisk,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Calibrate => "calibrate",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::FloodRisk => "flood-risk",
        }
    }

    pub fn outputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["series.csv", "split.json"],
            Stage::Calibrate => &["calibration.json"],
            Stage::Train => &[
                "windows_train.bin",
                "ensemble.json",
                "loss_q05.csv",
                "loss_q50.csv",
                "loss_q95.csv",
            ],
            Stage::Predict => &["forecast.csv", "forecast_diagnostics.json"],
            Stage::Evaluate => &["metrics.json"],
            Stage::FloodRisk => &["gev.json", "fri.csv", "tpr.csv"],
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("station {station}, stage {stage}: {cause:#}")]
pub struct PipelineError {
    pub station: String,
    pub stage: Stage,
    pub cause: anyhow::Error,
}

/// Where the chronological split falls, written by the ingest stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitInfo {
    pub station_id: String,
    pub n_days: usize,
    pub train_days: usize,
    pub first_date: NaiveDate,
    pub test_start: NaiveDate,
    pub train_fraction: f64,
    /// Missing-data audit of the raw file, before trimming and imputation.
    pub gaps: GapReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastDiagnostics {
    pub origins: usize,
    pub horizon: usize,
    pub crossings: usize,
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevReport {
    pub station_id: String,
    pub annual_maxima: Vec<(i32, f64)>,
    pub fit: GevFit,
    pub thresholds: Vec<FloodThreshold>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StationSeeds {
    pub calibration: u64,
    pub model_init: u64,
    pub training: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StationManifest {
    pub station_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub seeds: StationSeeds,
    /// File name to hex SHA-256.
    pub artifacts: BTreeMap<String, String>,
    /// Stage name to wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub stations: Vec<StationManifest>,
    pub total_seconds: f64,
}

pub fn station_dir(cfg: &PipelineConfig, station: &str) -> PathBuf {
    cfg.output_dir.join(station)
}

/// Stations named in the config, or every `*.csv` in the data directory.
pub fn discover_stations(cfg: &PipelineConfig) -> anyhow::Result<Vec<String>> {
    if !cfg.data.stations.is_empty() {
        return Ok(cfg.data.stations.clone());
    }
    let dir = cfg.data_dir();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "csv") {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.push(stem.to_string());
            }
        }
    }
    out.sort();
    ensure!(!out.is_empty(), "no station CSV files in {}", dir.display());
    Ok(out)
}

fn seeds(cfg: &PipelineConfig, station: &str) -> StationSeeds {
    StationSeeds {
        calibration: cfg.station_seed(station, SeedStream::Calibration),
        model_init: cfg.station_seed(station, SeedStream::ModelInit),
        training: cfg.station_seed(station, SeedStream::Training),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_series(dir: &Path, station: &str) -> anyhow::Result<(ForcingSeries, SplitInfo)> {
    let split: SplitInfo = read_json(&dir.join("split.json"))?;
    let series = load_station_file(&dir.join("series.csv"), station)
        .with_context(|| format!("reading {}", dir.join("series.csv").display()))?;
    ensure!(
        series.len() == split.n_days && series.is_gap_free(),
        "series.csv does not match split.json; rerun ingest"
    );
    Ok((series, split))
}

fn ingest(cfg: &PipelineConfig, station: &str, dir: &Path) -> anyhow::Result<()> {
    let path = cfg.data_dir().join(format!("{station}.csv"));
    let raw =
        load_station_file(&path, station).with_context(|| format!("loading {}", path.display()))?;
    let gaps = raw.gap_report();
    let series = audit_and_impute(&raw, cfg.data.max_missing)?;
    let n_train = split_index(series.len(), cfg.data.train_fraction);
    let (alpha, horizon) = (cfg.features.window, cfg.features.horizon);
    ensure!(
        n_train >= cfg.gr4j.warmup_days + alpha + horizon,
        "{n_train} training days cannot cover the {}-day warm-up plus one window",
        cfg.gr4j.warmup_days
    );
    ensure!(
        series.len() - n_train >= horizon,
        "test split shorter than the forecast horizon"
    );
    let file = fs::File::create(dir.join("series.csv"))?;
    series.write_csv(std::io::BufWriter::new(file))?;
    write_json(
        &dir.join("split.json"),
        &SplitInfo {
            station_id: station.to_string(),
            n_days: series.len(),
            train_days: n_train,
            first_date: series.dates[0],
            test_start: series.dates[n_train],
            train_fraction: cfg.data.train_fraction,
            gaps,
        },
    )?;
    info!(
        "[{station}] ingest: {} days, {} for training",
        series.len(),
        n_train
    );
    Ok(())
}

fn calibrate(cfg: &PipelineConfig, station: &str, dir: &Path) -> anyhow::Result<()> {
    let (series, split) = load_series(dir, station)?;
    let train = series.slice(0, split.train_days);
    let template = Gr4jSetup {
        params: Gr4jParams::new(350.0, 0.0, 90.0, 1.7)?,
        s0_frac: cfg.gr4j.s0_frac,
        r0_frac: cfg.gr4j.r0_frac,
        warmup_days: cfg.gr4j.warmup_days,
    };
    let de = cfg.de_config(seeds(cfg, station).calibration);
    let result = calibrate_gr4j(&train, &template, &de)?;
    info!(
        "[{station}] calibrate: NSE {:.4} after {} generations, x = {:?}",
        result.nse,
        result.generations,
        result.params().to_array()
    );
    write_json(&dir.join("calibration.json"), &result)
}

fn feature_table(
    cfg: &PipelineConfig,
    series: &ForcingSeries,
    dir: &Path,
) -> anyhow::Result<FeatureTable> {
    let cal: CalibrationResult = read_json(&dir.join("calibration.json"))?;
    Ok(FeatureTable::from_series(
        series,
        cal.params().x1,
        cfg.features.set,
    )?)
}

fn train(cfg: &PipelineConfig, station: &str, dir: &Path) -> anyhow::Result<()> {
    let (series, split) = load_series(dir, station)?;
    let table = feature_table(cfg, &series, dir)?;
    let train_table = table.slice(cfg.gr4j.warmup_days, split.train_days);
    let normalizer = train_table.fit_normalizer()?;
    let data = make_windows(
        &train_table,
        cfg.features.window,
        cfg.features.horizon,
        &normalizer,
    )?;
    data.save(&dir.join("windows_train.bin"))?;

    let s = seeds(cfg, station);
    let x1 = read_json::<CalibrationResult>(&dir.join("calibration.json"))?
        .params()
        .x1;
    let ensemble = train_ensemble(
        &data,
        &cfg.model_spec(s.model_init),
        &cfg.train_config(s.training),
        x1,
    )?;
    for (member, name) in
        ensemble
            .members
            .iter()
            .zip(["loss_q05.csv", "loss_q50.csv", "loss_q95.csv"])
    {
        let f = fs::File::create(dir.join(name))?;
        member.write_trace_csv(std::io::BufWriter::new(f))?;
        info!(
            "[{station}] train τ={}: loss {:.5} -> {:.5}",
            member.tau, member.initial_loss, member.final_loss
        );
    }
    let f = std::io::BufWriter::new(fs::File::create(dir.join("ensemble.json"))?);
    serde_json::to_writer(f, &ensemble)?;
    Ok(())
}

fn predict(cfg: &PipelineConfig, station: &str, dir: &Path) -> anyhow::Result<()> {
    let (series, split) = load_series(dir, station)?;
    let ensemble: QuantileEnsemble = read_json(&dir.join("ensemble.json"))?;
    let table = feature_table(cfg, &series, dir)?;
    ensure!(
        table.names == ensemble.feature_names,
        "ensemble was trained on features {:?}, config selects {:?}",
        ensemble.feature_names,
        table.names
    );
    let alpha = ensemble.spec.window;
    let horizon = ensemble.spec.horizon;
    // the first test window ends on the last training day
    let test = table.slice(split.train_days - alpha, table.len());
    let (inputs, origins) = make_input_windows(&test, alpha, horizon, &ensemble.normalizer)?;
    let forecast = ensemble.predict_intervals(&inputs, &origins)?;
    let f = std::io::BufWriter::new(fs::File::create(dir.join("forecast.csv"))?);
    forecast.write_csv(f)?;
    write_json(
        &dir.join("forecast_diagnostics.json"),
        &ForecastDiagnostics {
            origins: forecast.len(),
            horizon,
            crossings: forecast.crossings,
            clamped: forecast.clamped,
        },
    )?;
    info!(
        "[{station}] predict: {} origins, {} crossed cells sorted",
        forecast.len(),
        forecast.crossings
    );
    Ok(())
}

fn read_forecast(dir: &Path) -> anyhow::Result<QuantileForecast> {
    let path = dir.join("forecast.csv");
    let f = fs::File::open(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(QuantileForecast::read_csv(f)?)
}

/// Observed flow on each forecast cell, origin-major.
fn observed_for(
    forecast: &QuantileForecast,
    series: &ForcingSeries,
    split: &SplitInfo,
) -> anyhow::Result<Vec<f64>> {
    let mut obs = Vec::with_capacity(forecast.values.len());
    for origin in &forecast.origin_dates {
        let idx = (*origin - split.first_date).num_days();
        ensure!(idx >= 0, "origin {origin} precedes the series");
        let first = idx as usize + 1;
        ensure!(
            first >= split.train_days && first + forecast.horizon <= series.len(),
            "origin {origin} does not forecast into the test period"
        );
        obs.extend_from_slice(&series.streamflow[first..first + forecast.horizon]);
    }
    Ok(obs)
}

fn evaluate(_cfg: &PipelineConfig, station: &str, dir: &Path) -> anyhow::Result<()> {
    let (series, split) = load_series(dir, station)?;
    let forecast = read_forecast(dir)?;
    let obs = observed_for(&forecast, &series, &split)?;
    let report = MetricReport::compute(
        station,
        "test",
        &forecast.column(0),
        &forecast.column(1),
        &forecast.column(2),
        &obs,
        forecast.len(),
        forecast.horizon,
    )?;
    info!(
        "[{station}] evaluate: RMSE {:.4}, NSE {:.4}, IS {:.4}",
        report.rmse, report.nse, report.interval_score
    );
    write_json(&dir.join("metrics.json"), &report)
}

fn flood(cfg: &PipelineConfig, station: &str, dir: &Path) -> anyhow::Result<()> {
    let (series, split) = load_series(dir, station)?;
    let train = series.slice(0, split.train_days);
    let maxima = annual_maxima(&train.dates, &train.streamflow)?;
    let fit = fit_gev(&maxima.iter().map(|m| m.1).collect::<Vec<_>>())?;
    let thresholds = cfg
        .extremes
        .recurrence_years
        .iter()
        .map(|&k| FloodThreshold::from_gev(&fit.params, k))
        .collect::<Result<Vec<_>, _>>()?;

    let forecast = read_forecast(dir)?;
    let obs = observed_for(&forecast, &series, &split)?;
    let mut fri = Vec::with_capacity(forecast.len() * thresholds.len());
    for (m, &origin_date) in forecast.origin_dates.iter().enumerate() {
        for t in &thresholds {
            fri.push(FriRecord {
                origin_date,
                k_years: t.k_years,
                gamma: t.gamma,
                level: flood_risk(forecast.window(m), t.gamma),
            });
        }
    }
    let mut tpr = Vec::with_capacity(thresholds.len());
    for t in &thresholds {
        let (_, rate) = flood_labels_and_tpr(&forecast.values, &obs, forecast.horizon, t.gamma)?;
        tpr.push(TprRecord {
            station_id: station.to_string(),
            k_years: t.k_years,
            tpr: rate,
        });
    }
    write_fri_csv(
        std::io::BufWriter::new(fs::File::create(dir.join("fri.csv"))?),
        &fri,
    )?;
    write_tpr_csv(
        std::io::BufWriter::new(fs::File::create(dir.join("tpr.csv"))?),
        &tpr,
    )?;
    info!(
        "[{station}] flood-risk: GEV ζ={:.3} μ={:.3} σ={:.3}",
        fit.params.zeta, fit.params.mu, fit.params.sigma
    );
    write_json(
        &dir.join("gev.json"),
        &GevReport {
            station_id: station.to_string(),
            annual_maxima: maxima,
            fit,
            thresholds,
        },
    )
}

fn file_sha256(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn update_manifest(
    cfg: &PipelineConfig,
    station: &str,
    dir: &Path,
    stage: Stage,
    secs: f64,
) -> anyhow::Result<StationManifest> {
    let path = dir.join("manifest.json");
    let mut m: StationManifest = if path.exists() {
        read_json(&path)?
    } else {
        StationManifest::default()
    };
    let hash = cfg.hash();
    if m.config_hash != hash {
        // a different config invalidates earlier stamps
        m = StationManifest::default();
    }
    m.station_id = station.to_string();
    m.config_hash = hash;
    m.seed = cfg.seed;
    m.seeds = seeds(cfg, station);
    for name in stage.outputs() {
        m.artifacts
            .insert(name.to_string(), file_sha256(&dir.join(name))?);
    }
    m.timings.insert(stage.name().to_string(), secs);
    write_json(&path, &m)?;
    Ok(m)
}

/// Runs one stage for one station. On failure the stage's outputs are
/// removed.
pub fn run_stage(
    cfg: &PipelineConfig,
    station: &str,
    stage: Stage,
) -> Result<StationManifest, PipelineError> {
    let dir = station_dir(cfg, station);
    let wrap = |cause: anyhow::Error| PipelineError {
        station: station.to_string(),
        stage,
        cause,
    };
    let start = Instant::now();
    let result = (|| {
        cfg.validate()?;
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        match stage {
            Stage::Ingest => ingest(cfg, station, &dir),
            Stage::Calibrate => calibrate(cfg, station, &dir),
            Stage::Train => train(cfg, station, &dir),
            Stage::Predict => predict(cfg, station, &dir),
            Stage::Evaluate => evaluate(cfg, station, &dir),
            Stage::FloodRisk => flood(cfg, station, &dir),
        }?;
        update_manifest(cfg, station, &dir, stage, start.elapsed().as_secs_f64())
    })();
    result.map_err(|e| {
        for name in stage.outputs() {
            let _ = fs::remove_file(dir.join(name));
        }
        wrap(e)
    })
}

/// Runs every stage for one station, removing its directory on failure.
pub fn run_station(cfg: &PipelineConfig, station: &str) -> Result<StationManifest, PipelineError> {
    let mut manifest = None;
    for stage in Stage::ALL {
        match run_stage(cfg, station, stage) {
            Ok(m) => manifest = Some(m),
            Err(e) => {
                let _ = fs::remove_dir_all(station_dir(cfg, station));
                return Err(e);
            }
        }
    }
    Ok(manifest.expect("at least one stage"))
}

/// Runs the full pipeline for every station in parallel and writes
/// `<output_dir>/manifest.json`. Returns the first failure, in station
/// order, after all stations finish.
pub fn run_all(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let start = Instant::now();
    let stations = discover_stations(cfg).map_err(|cause| PipelineError {
        station: "*".into(),
        stage: Stage::Ingest,
        cause,
    })?;
    cfg.validate().map_err(|e| PipelineError {
        station: "*".into(),
        stage: Stage::Ingest,
        cause: e.into(),
    })?;
    let results: Vec<_> = stations.par_iter().map(|s| run_station(cfg, s)).collect();
    let mut done = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(m) => done.push(m),
            Err(e) => {
                log::error!("{e}");
                first_err.get_or_insert(e);
            }
        }
    }
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        output_dir: cfg.output_dir.clone(),
        stations: done,
        total_seconds: start.elapsed().as_secs_f64(),
    };
    let write = fs::create_dir_all(&cfg.output_dir)
        .map_err(anyhow::Error::from)
        .and_then(|_| write_json(&cfg.output_dir.join("manifest.json"), &manifest));
    if let Some(e) = first_err {
        return Err(e);
    }
    write.map_err(|cause| PipelineError {
        station: "*".into(),
        stage: Stage::FloodRisk,
        cause,
    })?;
    Ok(manifest)
}
