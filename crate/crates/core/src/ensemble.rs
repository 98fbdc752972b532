//! Three-member quantile ensemble giving a 90% prediction interval and a
//! median forecast over the horizon.

use std::io::{Read, Write};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::features::{WindowedDataset, TARGET_NAME};
use crate::ingest::{IngestError, Normalizer};
use crate::neural::{
    train_quantile_model, ModelSpec, NeuralError, Tensor, TrainConfig, TrainedModel,
};

pub const QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("member τ = {tau}: {source}")]
    Member {
        tau: f64,
        #[source]
        source: NeuralError,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Normalize(#[from] IngestError),
    #[error("inputs use features {found:?}, ensemble expects {expected:?}")]
    FeatureMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{0} origin dates for {1} windows")]
    DateMismatch(usize, usize),
    #[error("forecast csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("forecast csv: {0}")]
    Format(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantileEnsemble {
    pub spec: ModelSpec,
    /// One member per entry of [`QUANTILES`], in that order.
    pub members: Vec<TrainedModel>,
    pub normalizer: Normalizer,
    pub feature_names: Vec<String>,
    /// Production store capacity the input features were built with.
    pub x1: f64,
}

/// Trains the three members concurrently. Member `i` uses
/// `spec.seed + i` for initialization and `config.seed + i` for batching.
pub fn train_ensemble(
    data: &WindowedDataset,
    spec: &ModelSpec,
    config: &TrainConfig,
    x1: f64,
) -> Result<QuantileEnsemble, EnsembleError> {
    let members = QUANTILES
        .par_iter()
        .enumerate()
        .map(|(i, &tau)| {
            let spec = spec.clone().with_seed(spec.seed.wrapping_add(i as u64));
            let config = TrainConfig {
                seed: config.seed.wrapping_add(i as u64),
                ..config.clone()
            };
            train_quantile_model(&spec, &data.inputs, &data.targets, tau, &config)
                .map_err(|source| EnsembleError::Member { tau, source })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(QuantileEnsemble {
        spec: spec.clone(),
        members,
        normalizer: data.normalizer.clone(),
        feature_names: data.feature_names.clone(),
        x1,
    })
}

impl QuantileEnsemble {
    /// Predicts every window, returning mm/day quantiles sorted per cell and
    /// clamped at zero.
    pub fn predict_intervals(
        &self,
        inputs: &Tensor,
        origin_dates: &[NaiveDate],
    ) -> Result<QuantileForecast, EnsembleError> {
        let m = inputs.rows();
        if origin_dates.len() != m {
            return Err(EnsembleError::DateMismatch(origin_dates.len(), m));
        }
        let raw: Vec<Vec<f64>> = self
            .members
            .iter()
            .map(|member| {
                let z = member.model.predict(inputs)?;
                Ok(self.normalizer.invert(TARGET_NAME, z.data())?)
            })
            .collect::<Result<_, EnsembleError>>()?;

        let mut values = Vec::with_capacity(raw[0].len());
        let (mut crossings, mut clamped) = (0, 0);
        for ((&lo, &mid), &hi) in raw[0].iter().zip(&raw[1]).zip(&raw[2]) {
            let mut cell = [lo, mid, hi];
            if !(cell[0] <= cell[1] && cell[1] <= cell[2]) {
                crossings += 1;
                cell.sort_by(f64::total_cmp);
            }
            for v in cell.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    clamped += 1;
                }
            }
            values.push(cell);
        }
        Ok(QuantileForecast {
            origin_dates: origin_dates.to_vec(),
            horizon: self.spec.horizon,
            values,
            crossings,
            clamped,
        })
    }

    pub fn predict_dataset(
        &self,
        data: &WindowedDataset,
    ) -> Result<QuantileForecast, EnsembleError> {
        if data.feature_names != self.feature_names {
            return Err(EnsembleError::FeatureMismatch {
                expected: self.feature_names.clone(),
                found: data.feature_names.clone(),
            });
        }
        self.predict_intervals(&data.inputs, &data.origin_dates)
    }
}

/// Quantile forecasts for `M` origins over `horizon` lead days.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileForecast {
    pub origin_dates: Vec<NaiveDate>,
    pub horizon: usize,
    /// `(q05, q50, q95)` per origin and lead day, origin-major.
    pub values: Vec<[f64; 3]>,
    /// Cells whose raw member outputs were out of order.
    pub crossings: usize,
    /// Values raised to zero.
    pub clamped: usize,
}

#[derive(Serialize, Deserialize)]
struct ForecastRow {
    origin_date: NaiveDate,
    lead_day: usize,
    q05: f64,
    q50: f64,
    q95: f64,
}

impl QuantileForecast {
    pub fn len(&self) -> usize {
        self.origin_dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origin_dates.is_empty()
    }

    pub fn window(&self, m: usize) -> &[[f64; 3]] {
        &self.values[m * self.horizon..(m + 1) * self.horizon]
    }

    /// One quantile (0 = q05, 1 = q50, 2 = q95) for every cell.
    pub fn column(&self, q: usize) -> Vec<f64> {
        self.values.iter().map(|c| c[q]).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), EnsembleError> {
        let mut out = csv::Writer::from_writer(w);
        for (m, &origin_date) in self.origin_dates.iter().enumerate() {
            for (lead, c) in self.window(m).iter().enumerate() {
                out.serialize(ForecastRow {
                    origin_date,
                    lead_day: lead + 1,
                    q05: c[0],
                    q50: c[1],
                    q95: c[2],
                })?;
            }
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a forecast CSV. Diagnostics are not stored in the file and come
    /// back as zero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, EnsembleError> {
        let mut rows = Vec::new();
        for rec in csv::Reader::from_reader(r).deserialize() {
            let row: ForecastRow = rec?;
            rows.push(row);
        }
        let horizon = rows.iter().map(|r| r.lead_day).max().unwrap_or(0);
        if horizon == 0 || rows.len() % horizon != 0 {
            return Err(EnsembleError::Format("incomplete horizon blocks".into()));
        }
        let mut f = QuantileForecast {
            origin_dates: Vec::new(),
            horizon,
            values: Vec::with_capacity(rows.len()),
            crossings: 0,
            clamped: 0,
        };
        for (i, chunk) in rows.chunks(horizon).enumerate() {
            let origin = chunk[0].origin_date;
            for (lead, r) in chunk.iter().enumerate() {
                if r.origin_date != origin || r.lead_day != lead + 1 {
                    return Err(EnsembleError::Format(format!(
                        "block {i} is not leads 1..{horizon}"
                    )));
                }
                f.values.push([r.q05, r.q50, r.q95]);
            }
            f.origin_dates.push(origin);
        }
        Ok(f)
    }
}
