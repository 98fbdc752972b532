//! Station time-series loading, gap audit, imputation, splitting and z-score
//! normalization.
//!
//! Missing cells are stored as `NaN` in [`ForcingSeries`]; use
//! [`is_missing`] rather than comparing against a sentinel.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

pub const CSV_HEADER: [&str; 7] = [
    "date",
    "precip_mm",
    "evap_mm",
    "tmin_c",
    "tmax_c",
    "vprp_hpa",
    "streamflow_mmd",
];

const DATE_FORMAT: &str = "%Y-%m-%d";

#[inline]
pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Precip,
    Evap,
    Tmin,
    Tmax,
    Vprp,
    Streamflow,
}

impl Variable {
    pub const ALL: [Variable; 6] = [
        Variable::Precip,
        Variable::Evap,
        Variable::Tmin,
        Variable::Tmax,
        Variable::Vprp,
        Variable::Streamflow,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::Precip => "precip",
            Variable::Evap => "evap",
            Variable::Tmin => "tmin",
            Variable::Tmax => "tmax",
            Variable::Vprp => "vprp",
            Variable::Streamflow => "streamflow",
        }
    }

    /// Physically non-negative quantities; negative readings load as missing.
    fn non_negative(self) -> bool {
        matches!(
            self,
            Variable::Precip | Variable::Evap | Variable::Streamflow
        )
    }
}

/// Daily hydro-meteorological record for one station.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSeries {
    pub station_id: String,
    pub dates: Vec<NaiveDate>,
    /// mm/day
    pub precip: Vec<f64>,
    /// potential evapotranspiration, mm/day
    pub evap: Vec<f64>,
    /// °C
    pub tmin: Vec<f64>,
    /// °C
    pub tmax: Vec<f64>,
    /// vapour pressure, hPa
    pub vprp: Vec<f64>,
    /// mm/day
    pub streamflow: Vec<f64>,
}

impl ForcingSeries {
    pub fn empty(station_id: impl Into<String>) -> Self {
        ForcingSeries {
            station_id: station_id.into(),
            dates: Vec::new(),
            precip: Vec::new(),
            evap: Vec::new(),
            tmin: Vec::new(),
            tmax: Vec::new(),
            vprp: Vec::new(),
            streamflow: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn variable(&self, v: Variable) -> &[f64] {
        match v {
            Variable::Precip => &self.precip,
            Variable::Evap => &self.evap,
            Variable::Tmin => &self.tmin,
            Variable::Tmax => &self.tmax,
            Variable::Vprp => &self.vprp,
            Variable::Streamflow => &self.streamflow,
        }
    }

    pub fn variable_mut(&mut self, v: Variable) -> &mut Vec<f64> {
        match v {
            Variable::Precip => &mut self.precip,
            Variable::Evap => &mut self.evap,
            Variable::Tmin => &mut self.tmin,
            Variable::Tmax => &mut self.tmax,
            Variable::Vprp => &mut self.vprp,
            Variable::Streamflow => &mut self.streamflow,
        }
    }

    fn push_missing(&mut self, date: NaiveDate) {
        self.dates.push(date);
        for v in Variable::ALL {
            self.variable_mut(v).push(f64::NAN);
        }
    }

    /// Days `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> ForcingSeries {
        let mut out = ForcingSeries::empty(self.station_id.clone());
        out.dates = self.dates[start..end].to_vec();
        for v in Variable::ALL {
            *out.variable_mut(v) = self.variable(v)[start..end].to_vec();
        }
        out
    }

    /// Appends `other` (assumed to continue this series' dates).
    pub fn concat(&self, other: &ForcingSeries) -> ForcingSeries {
        let mut out = self.clone();
        out.dates.extend_from_slice(&other.dates);
        for v in Variable::ALL {
            out.variable_mut(v).extend_from_slice(other.variable(v));
        }
        out
    }

    pub fn is_gap_free(&self) -> bool {
        Variable::ALL
            .iter()
            .all(|&v| !self.variable(v).iter().any(|x| is_missing(*x)))
    }

    pub fn gap_report(&self) -> GapReport {
        let total = self.len();
        let variables = Variable::ALL
            .iter()
            .map(|&v| {
                let missing = self.variable(v).iter().filter(|x| is_missing(**x)).count();
                VariableGaps {
                    variable: v,
                    missing,
                    fraction: if total == 0 {
                        0.0
                    } else {
                        missing as f64 / total as f64
                    },
                }
            })
            .collect();
        GapReport {
            total_steps: total,
            variables,
        }
    }

    /// Writes the series in the station CSV schema; missing cells are empty.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), IngestError> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for i in 0..self.len() {
            let mut rec = vec![self.dates[i].format(DATE_FORMAT).to_string()];
            for v in Variable::ALL {
                let x = self.variable(v)[i];
                rec.push(if is_missing(x) {
                    String::new()
                } else {
                    x.to_string()
                });
            }
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableGaps {
    pub variable: Variable,
    pub missing: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub total_steps: usize,
    pub variables: Vec<VariableGaps>,
}

impl GapReport {
    pub fn fraction(&self, v: Variable) -> f64 {
        self.variables
            .iter()
            .find(|g| g.variable == v)
            .map_or(0.0, |g| g.fraction)
    }

    pub fn worst(&self) -> Option<&VariableGaps> {
        self.variables
            .iter()
            .max_by(|a, b| a.fraction.total_cmp(&b.fraction))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bad header: expected `{expected}`, found `{found}`")]
    Header { expected: String, found: String },
    #[error("row {row}: wrong number of fields ({found})")]
    FieldCount { row: usize, found: usize },
    #[error("row {row}: malformed date `{value}`")]
    MalformedDate { row: usize, value: String },
    #[error("row {row}: duplicate date {date}")]
    DuplicateDate { row: usize, date: NaiveDate },
    #[error("row {row}: date {date} precedes the previous row")]
    NonMonotoneDate { row: usize, date: NaiveDate },
    #[error("station rejected: {} missing {:.1}% of steps (limit {:.1}%)",
        report.worst().map_or("?", |g| g.variable.name()),
        100.0 * report.worst().map_or(0.0, |g| g.fraction),
        100.0 * limit)]
    Rejected { report: GapReport, limit: f64 },
    #[error("series has no day on which every variable is present")]
    NoCompleteDays,
    #[error("series needs at least {needed} days, has {found}")]
    TooShort { needed: usize, found: usize },
    #[error("split fraction {0} outside [0, 1]")]
    InvalidFraction(f64),
    #[error("variable `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("variable `{0}` has no finite values")]
    NoValues(String),
    #[error("normalizer has no variable `{0}`")]
    UnknownVariable(String),
}

/// Parses a station CSV. Calendar days absent from the file become rows of
/// missing values, so the result has exactly one record per day. Rows are
/// numbered from 1 (the first data row), excluding the header.
pub fn load_station<R: Read>(source: R, station_id: &str) -> Result<ForcingSeries, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(IngestError::Header {
            expected: CSV_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }

    let mut series = ForcingSeries::empty(station_id);
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        if rec.len() != CSV_HEADER.len() {
            return Err(IngestError::FieldCount {
                row,
                found: rec.len(),
            });
        }
        let date = NaiveDate::parse_from_str(&rec[0], DATE_FORMAT).map_err(|_| {
            IngestError::MalformedDate {
                row,
                value: rec[0].to_string(),
            }
        })?;
        if let Some(&last) = series.dates.last() {
            if date == last {
                return Err(IngestError::DuplicateDate { row, date });
            }
            if date < last {
                return Err(IngestError::NonMonotoneDate { row, date });
            }
            let mut d = last.succ_opt().expect("date overflow");
            while d < date {
                series.push_missing(d);
                d = d.succ_opt().expect("date overflow");
            }
        }
        series.dates.push(date);
        for (k, v) in Variable::ALL.into_iter().enumerate() {
            let cell = rec[k + 1].parse::<f64>().ok().filter(|x| x.is_finite());
            let value = match cell {
                Some(x) if v.non_negative() && x < 0.0 => f64::NAN,
                Some(x) => x,
                None => f64::NAN,
            };
            series.variable_mut(v).push(value);
        }
    }
    Ok(series)
}

pub fn load_station_file(path: &Path, station_id: &str) -> Result<ForcingSeries, IngestError> {
    load_station(std::fs::File::open(path)?, station_id)
}

/// Rejects the station if any variable is missing on more than `max_missing`
/// of its days; otherwise trims leading/trailing days where some variable is
/// missing and fills interior gaps by linear interpolation.
pub fn audit_and_impute(
    series: &ForcingSeries,
    max_missing: f64,
) -> Result<ForcingSeries, IngestError> {
    let report = series.gap_report();
    if report.variables.iter().any(|g| g.fraction > max_missing) {
        return Err(IngestError::Rejected {
            report,
            limit: max_missing,
        });
    }
    let complete = |i: usize| {
        Variable::ALL
            .iter()
            .all(|&v| !is_missing(series.variable(v)[i]))
    };
    let first = (0..series.len())
        .find(|&i| complete(i))
        .ok_or(IngestError::NoCompleteDays)?;
    let last = (0..series.len()).rev().find(|&i| complete(i)).unwrap();
    let mut out = series.slice(first, last + 1);
    for v in Variable::ALL {
        interpolate_interior(out.variable_mut(v));
    }
    Ok(out)
}

/// Linear interpolation across interior `NaN` runs. Ends are left untouched.
pub fn interpolate_interior(values: &mut [f64]) {
    let mut prev: Option<usize> = None;
    for i in 0..values.len() {
        if is_missing(values[i]) {
            continue;
        }
        if let Some(p) = prev {
            if i > p + 1 {
                let (a, b) = (values[p], values[i]);
                let span = (i - p) as f64;
                for (j, slot) in values.iter_mut().enumerate().take(i).skip(p + 1) {
                    let w = (j - p) as f64 / span;
                    *slot = a + (b - a) * w;
                }
            }
        }
        prev = Some(i);
    }
}

/// First `⌊fraction·N⌋` days for training, the rest for testing.
pub fn chronological_split(
    series: &ForcingSeries,
    train_fraction: f64,
) -> Result<(ForcingSeries, ForcingSeries), IngestError> {
    if series.len() < 2 {
        return Err(IngestError::TooShort {
            needed: 2,
            found: series.len(),
        });
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(IngestError::InvalidFraction(train_fraction));
    }
    let n_train = split_index(series.len(), train_fraction);
    Ok((
        series.slice(0, n_train),
        series.slice(n_train, series.len()),
    ))
}

pub fn split_index(n: usize, train_fraction: f64) -> usize {
    ((n as f64) * train_fraction).floor() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-column z-score statistics (population standard deviation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub columns: Vec<ColumnStats>,
}

impl Normalizer {
    /// Fits mean and population std of each named column, ignoring missing cells.
    pub fn fit<'a, I>(columns: I) -> Result<Normalizer, IngestError>
    where
        I: IntoIterator<Item = (&'a str, &'a [f64])>,
    {
        let mut out = Vec::new();
        for (name, values) in columns {
            let present: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
            if present.is_empty() {
                return Err(IngestError::NoValues(name.to_string()));
            }
            let n = present.len() as f64;
            let mean = present.iter().sum::<f64>() / n;
            let var = present.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std.is_nan() || std <= 1e-12 * mean.abs().max(1.0) {
                return Err(IngestError::ZeroVariance(name.to_string()));
            }
            out.push(ColumnStats {
                name: name.to_string(),
                mean,
                std,
            });
        }
        Ok(Normalizer { columns: out })
    }

    pub fn stats(&self, name: &str) -> Result<&ColumnStats, IngestError> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| IngestError::UnknownVariable(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    #[inline]
    pub fn apply_value(stats: &ColumnStats, x: f64) -> f64 {
        (x - stats.mean) / stats.std
    }

    #[inline]
    pub fn invert_value(stats: &ColumnStats, z: f64) -> f64 {
        z * stats.std + stats.mean
    }

    pub fn apply(&self, name: &str, values: &[f64]) -> Result<Vec<f64>, IngestError> {
        let s = self.stats(name)?;
        Ok(values.iter().map(|&x| Self::apply_value(s, x)).collect())
    }

    pub fn invert(&self, name: &str, values: &[f64]) -> Result<Vec<f64>, IngestError> {
        let s = self.stats(name)?;
        Ok(values.iter().map(|&z| Self::invert_value(s, z)).collect())
    }

    pub fn save(&self, path: &Path) -> Result<(), IngestError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Normalizer, IngestError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Fits a normalizer on the given variables of a (training) series.
pub fn fit_normalizer(
    train: &ForcingSeries,
    variables: &[Variable],
) -> Result<Normalizer, IngestError> {
    Normalizer::fit(variables.iter().map(|&v| (v.name(), train.variable(v))))
}
