//! Hybrid feature rows and sliding windows for the quantile models.
//!
//! Each day carries the five meteorological inputs followed by four
//! production-store fluxes computed with the calibrated `x1`:
//!
//! ```text
//! [P, E, Tmin, Tmax, vprp, Pn, En, Ps, Perc]
//! ```
//!
//! A window of `α` consecutive days predicts streamflow on the `H` days that
//! follow it.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::gr4j::{production_step, Gr4jError, DEFAULT_S0_FRAC};
use crate::ingest::{ForcingSeries, IngestError, Normalizer};
use crate::neural::Tensor;

pub const FEATURE_NAMES: [&str; 9] = [
    "precip", "evap", "tmin", "tmax", "vprp", "pn", "en", "ps", "perc",
];
pub const TARGET_NAME: &str = "streamflow";
pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_HORIZON: usize = 3;

const MAGIC: &[u8; 8] = b"HQWIN\x00\x01\x00";

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error(transparent)]
    Model(#[from] Gr4jError),
    #[error(transparent)]
    Normalize(#[from] IngestError),
    #[error("{n} days cannot fill a window of {alpha} plus horizon {horizon}")]
    TooShort {
        n: usize,
        alpha: usize,
        horizon: usize,
    },
    #[error("column lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("window and horizon must be positive")]
    ZeroLength,
    #[error("non-finite value in column {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad dataset file: {0}")]
    Format(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HybridFeatureRow {
    pub p: f64,
    pub e: f64,
    pub tmin: f64,
    pub tmax: f64,
    pub vprp: f64,
    pub pn: f64,
    pub en: f64,
    pub ps: f64,
    pub perc: f64,
}

impl HybridFeatureRow {
    pub fn to_array(&self) -> [f64; 9] {
        [
            self.p, self.e, self.tmin, self.tmax, self.vprp, self.pn, self.en, self.ps, self.perc,
        ]
    }
}

/// Runs the production store from `0.3·x1` over the whole series and pairs
/// each day's fluxes with its meteorology.
pub fn generate_hybrid_features(
    series: &ForcingSeries,
    x1: f64,
) -> Result<Vec<HybridFeatureRow>, FeatureError> {
    if !(x1.is_finite() && x1 > 0.0) {
        return Err(Gr4jError::InvalidParams(format!("x1 = {x1}")).into());
    }
    let mut s = DEFAULT_S0_FRAC * x1;
    let mut rows = Vec::with_capacity(series.len());
    for day in 0..series.len() {
        let (f, s_new) =
            production_step(s, series.precip[day], series.evap[day], x1).map_err(|source| {
                Gr4jError::Step {
                    day,
                    source: Box::new(source),
                }
            })?;
        s = s_new;
        rows.push(HybridFeatureRow {
            p: series.precip[day],
            e: series.evap[day],
            tmin: series.tmin[day],
            tmax: series.tmax[day],
            vprp: series.vprp[day],
            pn: f.pn,
            en: f.en,
            ps: f.ps,
            perc: f.perc,
        });
    }
    Ok(rows)
}

/// Which inputs feed the models: all nine, or the meteorology alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    #[default]
    Hybrid,
    MeteoOnly,
}

impl FeatureSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            FeatureSet::Hybrid => &FEATURE_NAMES,
            FeatureSet::MeteoOnly => &FEATURE_NAMES[..5],
        }
    }
}

/// Daily feature columns aligned with dates and observed streamflow.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTable {
    pub names: Vec<String>,
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<Vec<f64>>,
    pub streamflow: Vec<f64>,
}

impl FeatureTable {
    pub fn from_series(
        series: &ForcingSeries,
        x1: f64,
        set: FeatureSet,
    ) -> Result<Self, FeatureError> {
        let rows = generate_hybrid_features(series, x1)?;
        let width = set.names().len();
        let columns = (0..width)
            .map(|c| rows.iter().map(|r| r.to_array()[c]).collect())
            .collect();
        Ok(FeatureTable {
            names: set.names().iter().map(|s| s.to_string()).collect(),
            dates: series.dates.clone(),
            columns,
            streamflow: series.streamflow.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn slice(&self, start: usize, end: usize) -> FeatureTable {
        FeatureTable {
            names: self.names.clone(),
            dates: self.dates[start..end].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| c[start..end].to_vec())
                .collect(),
            streamflow: self.streamflow[start..end].to_vec(),
        }
    }

    /// Fits z-score statistics for every feature column and the target.
    pub fn fit_normalizer(&self) -> Result<Normalizer, FeatureError> {
        let cols = self
            .names
            .iter()
            .map(|n| n.as_str())
            .zip(self.columns.iter().map(|c| c.as_slice()))
            .chain(std::iter::once((TARGET_NAME, self.streamflow.as_slice())));
        Ok(Normalizer::fit(cols)?)
    }
}

/// Normalized input windows `M × α × F` with their `M × H` targets.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Tensor,
    pub targets: Tensor,
    /// Date of the last input day of each window.
    pub origin_dates: Vec<NaiveDate>,
    pub feature_names: Vec<String>,
    pub normalizer: Normalizer,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.origin_dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin_dates.is_empty()
    }

    pub fn alpha(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.inputs.shape()[2]
    }

    pub fn horizon(&self) -> usize {
        self.targets.shape()[1]
    }

    /// Targets back in mm/day, row-major `M × H`.
    pub fn raw_targets(&self) -> Result<Vec<f64>, FeatureError> {
        Ok(self.normalizer.invert(TARGET_NAME, self.targets.data())?)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FeatureError> {
        #[derive(Serialize)]
        struct Meta<'a> {
            origin_dates: &'a [NaiveDate],
            feature_names: &'a [String],
            normalizer: &'a Normalizer,
        }
        let meta = serde_json::to_vec(&Meta {
            origin_dates: &self.origin_dates,
            feature_names: &self.feature_names,
            normalizer: &self.normalizer,
        })
        .map_err(|e| FeatureError::Format(e.to_string()))?;
        w.write_all(MAGIC)?;
        for n in [
            self.len(),
            self.alpha(),
            self.width(),
            self.horizon(),
            meta.len(),
        ] {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&meta)?;
        for v in self.inputs.data().iter().chain(self.targets.data()) {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FeatureError> {
        #[derive(Deserialize)]
        struct Meta {
            origin_dates: Vec<NaiveDate>,
            feature_names: Vec<String>,
            normalizer: Normalizer,
        }
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(FeatureError::Format("not a window dataset".into()));
        }
        let mut header = [0usize; 5];
        for h in header.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = usize::try_from(u64::from_le_bytes(b))
                .map_err(|_| FeatureError::Format("header overflow".into()))?;
        }
        let [m, alpha, width, horizon, meta_len] = header;
        let mut meta = vec![0u8; meta_len];
        r.read_exact(&mut meta)?;
        let meta: Meta =
            serde_json::from_slice(&meta).map_err(|e| FeatureError::Format(e.to_string()))?;
        if meta.origin_dates.len() != m || meta.feature_names.len() != width {
            return Err(FeatureError::Format(
                "metadata disagrees with header".into(),
            ));
        }
        let mut read_f64s = |n: usize| -> Result<Vec<f64>, FeatureError> {
            let mut buf = vec![0u8; n * 8];
            r.read_exact(&mut buf)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect())
        };
        let inputs = read_f64s(m * alpha * width)?;
        let targets = read_f64s(m * horizon)?;
        let shape_err = |e: crate::neural::NeuralError| FeatureError::Format(e.to_string());
        Ok(WindowedDataset {
            inputs: Tensor::new(vec![m, alpha, width], inputs).map_err(shape_err)?,
            targets: Tensor::new(vec![m, horizon], targets).map_err(shape_err)?,
            origin_dates: meta.origin_dates,
            feature_names: meta.feature_names,
            normalizer: meta.normalizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FeatureError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self, FeatureError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Slides an `alpha`-day window over `table`, pairing window `t` (rows
/// `t .. t+alpha`) with streamflow rows `t+alpha .. t+alpha+horizon`.
/// Yields `N − α − H + 1` windows, normalized with `normalizer`.
pub fn make_windows(
    table: &FeatureTable,
    alpha: usize,
    horizon: usize,
    normalizer: &Normalizer,
) -> Result<WindowedDataset, FeatureError> {
    if alpha == 0 || horizon == 0 {
        return Err(FeatureError::ZeroLength);
    }
    let n = table.len();
    if n < alpha + horizon {
        return Err(FeatureError::TooShort { n, alpha, horizon });
    }
    if table.streamflow.len() != n {
        return Err(FeatureError::LengthMismatch(n, table.streamflow.len()));
    }
    let mut normalized = Vec::with_capacity(table.columns.len());
    for (name, col) in table.names.iter().zip(&table.columns) {
        if col.len() != n {
            return Err(FeatureError::LengthMismatch(n, col.len()));
        }
        if col.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite(name.clone()));
        }
        normalized.push(normalizer.apply(name, col)?);
    }
    if table.streamflow.iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::NonFinite(TARGET_NAME.into()));
    }
    let target = normalizer.apply(TARGET_NAME, &table.streamflow)?;

    let m = n - alpha - horizon + 1;
    let width = normalized.len();
    let mut inputs = Vec::with_capacity(m * alpha * width);
    let mut targets = Vec::with_capacity(m * horizon);
    for t in 0..m {
        for day in t..t + alpha {
            inputs.extend(normalized.iter().map(|c| c[day]));
        }
        targets.extend_from_slice(&target[t + alpha..t + alpha + horizon]);
    }
    Ok(WindowedDataset {
        inputs: Tensor::new(vec![m, alpha, width], inputs).expect("window shape"),
        targets: Tensor::new(vec![m, horizon], targets).expect("target shape"),
        origin_dates: (0..m).map(|t| table.dates[t + alpha - 1]).collect(),
        feature_names: table.names.clone(),
        normalizer: normalizer.clone(),
    })
}

/// Input windows alone, for forecasting without reading observed flow.
/// Covers the same `N − α − H + 1` origins as [`make_windows`].
pub fn make_input_windows(
    table: &FeatureTable,
    alpha: usize,
    horizon: usize,
    normalizer: &Normalizer,
) -> Result<(Tensor, Vec<NaiveDate>), FeatureError> {
    let blind = FeatureTable {
        streamflow: vec![normalizer.stats(TARGET_NAME)?.mean; table.len()],
        ..table.clone()
    };
    let d = make_windows(&blind, alpha, horizon, normalizer)?;
    Ok((d.inputs, d.origin_dates))
}
