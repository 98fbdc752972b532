//! Pipeline configuration, read from TOML.
//!
//! Every section is optional except `[data]`, which must name `dir`.
//! Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::{DeConfig, GR4J_BOUNDS};
use crate::ensemble::QUANTILES;
use crate::features::{FeatureSet, DEFAULT_HORIZON, DEFAULT_WINDOW};
use crate::gr4j::{DEFAULT_R0_FRAC, DEFAULT_S0_FRAC, DEFAULT_WARMUP_DAYS};
use crate::neural::{AdamConfig, Architecture, ModelSpec, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("missing required config key `{0}`")]
    Missing(&'static str),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("reading config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding one `<station>.csv` per station.
    pub dir: Option<PathBuf>,
    /// Stations to process; empty means every CSV in `dir`.
    pub stations: Vec<String>,
    pub max_missing: f64,
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dir: None,
            stations: Vec::new(),
            max_missing: 0.10,
            train_fraction: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gr4jSection {
    pub s0_frac: f64,
    pub r0_frac: f64,
    pub warmup_days: usize,
}

impl Default for Gr4jSection {
    fn default() -> Self {
        Gr4jSection {
            s0_frac: DEFAULT_S0_FRAC,
            r0_frac: DEFAULT_R0_FRAC,
            warmup_days: DEFAULT_WARMUP_DAYS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub population: usize,
    pub weight: f64,
    pub crossover: f64,
    pub max_generations: usize,
    pub patience: usize,
    pub tolerance: f64,
    pub bounds: Vec<(f64, f64)>,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        let d = DeConfig::default();
        CalibrationSection {
            population: d.population,
            weight: d.weight,
            crossover: d.crossover,
            max_generations: d.max_generations,
            patience: d.patience,
            tolerance: d.tolerance,
            bounds: GR4J_BOUNDS.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub window: usize,
    pub horizon: usize,
    pub set: FeatureSet,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            window: DEFAULT_WINDOW,
            horizon: DEFAULT_HORIZON,
            set: FeatureSet::Hybrid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub architecture: Architecture,
    /// Layer widths; empty selects the architecture's default.
    pub hidden: Vec<usize>,
    pub kernel_size: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            architecture: Architecture::LstmEncdec,
            hidden: Vec::new(),
            kernel_size: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub quantiles: Vec<f64>,
    pub epochs: usize,
    /// Zero trains full-batch.
    pub batch_size: usize,
    /// Zero disables clipping.
    pub clip_norm: f64,
    /// Zero disables early stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainingSection {
            quantiles: QUANTILES.to_vec(),
            epochs: 200,
            batch_size: 128,
            clip_norm: 5.0,
            patience: 0,
            validation_fraction: 0.0,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtremesSection {
    pub recurrence_years: Vec<f64>,
}

impl Default for ExtremesSection {
    fn default() -> Self {
        ExtremesSection {
            recurrence_years: vec![3.0, 5.0, 7.0, 10.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataSection,
    pub gr4j: Gr4jSection,
    pub calibration: CalibrationSection,
    pub features: FeaturesSection,
    pub model: ModelSection,
    pub training: TrainingSection,
    pub extremes: ExtremesSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            output_dir: PathBuf::from("out"),
            data: DataSection::default(),
            gr4j: Gr4jSection::default(),
            calibration: CalibrationSection::default(),
            features: FeaturesSection::default(),
            model: ModelSection::default(),
            training: TrainingSection::default(),
            extremes: ExtremesSection::default(),
        }
    }
}

/// Stage tags mixed into per-station seeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedStream {
    Calibration,
    ModelInit,
    Training,
}

impl PipelineConfig {
    /// Parses and validates. Relative `data.dir` and `output_dir` are
    /// resolved against `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        if let Some(dir) = &cfg.data.dir {
            if dir.is_relative() {
                cfg.data.dir = Some(base.join(dir));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are taken relative to
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.data.dir.is_none() {
            return Err(ConfigError::Missing("data.dir"));
        }
        let d = &self.data;
        if !(0.0..=1.0).contains(&d.max_missing) {
            return Err(invalid(
                "data.max_missing",
                format!("{} outside [0, 1]", d.max_missing),
            ));
        }
        if !(d.train_fraction > 0.0 && d.train_fraction < 1.0) {
            return Err(invalid(
                "data.train_fraction",
                format!("{} outside (0, 1)", d.train_fraction),
            ));
        }
        let g = &self.gr4j;
        for (key, v) in [("gr4j.s0_frac", g.s0_frac), ("gr4j.r0_frac", g.r0_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(key, format!("{v} outside [0, 1]")));
            }
        }
        self.de_config(0)
            .validate()
            .map_err(|e| invalid("calibration", e.to_string()))?;
        if self.calibration.bounds.len() != 4 {
            return Err(invalid(
                "calibration.bounds",
                "expected four (low, high) pairs",
            ));
        }
        if self.features.window == 0 {
            return Err(invalid("features.window", "must be positive"));
        }
        if self.features.horizon == 0 {
            return Err(invalid("features.horizon", "must be positive"));
        }
        let t = &self.training;
        if t.quantiles.len() != QUANTILES.len()
            || t.quantiles
                .iter()
                .zip(QUANTILES)
                .any(|(a, b)| (a - b).abs() > 1e-12)
        {
            return Err(invalid(
                "training.quantiles",
                format!("must be {QUANTILES:?}"),
            ));
        }
        self.train_config(0)
            .validate()
            .map_err(|e| invalid("training", e.to_string()))?;
        self.model_spec(0)
            .validate()
            .map_err(|e| invalid("model", e.to_string()))?;
        if self.extremes.recurrence_years.is_empty() {
            return Err(invalid("extremes.recurrence_years", "empty"));
        }
        if let Some(k) = self
            .extremes
            .recurrence_years
            .iter()
            .find(|k| !(**k >= 2.0 && k.is_finite()))
        {
            return Err(invalid(
                "extremes.recurrence_years",
                format!("{k} is below 2"),
            ));
        }
        Ok(())
    }

    pub fn data_dir(&self) -> &Path {
        self.data
            .dir
            .as_deref()
            .expect("validated config has data.dir")
    }

    /// Hex SHA-256 of the config's canonical TOML form.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("config serializes");
        hex(&Sha256::digest(text.as_bytes()))
    }

    /// Seed for one station and stage, derived from the global seed.
    pub fn station_seed(&self, station: &str, stream: SeedStream) -> u64 {
        let tag = match stream {
            SeedStream::Calibration => "calibration",
            SeedStream::ModelInit => "model",
            SeedStream::Training => "training",
        };
        let digest = Sha256::digest(format!("{}:{station}:{tag}", self.seed).as_bytes());
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn de_config(&self, seed: u64) -> DeConfig {
        let c = &self.calibration;
        DeConfig {
            population: c.population,
            weight: c.weight,
            crossover: c.crossover,
            max_generations: c.max_generations,
            patience: c.patience,
            tolerance: c.tolerance,
            seed,
            bounds: c.bounds.clone(),
        }
    }

    pub fn model_spec(&self, seed: u64) -> ModelSpec {
        let width = self.features.set.names().len();
        let mut spec = ModelSpec::new(
            self.model.architecture,
            self.features.window,
            width,
            self.features.horizon,
        )
        .with_seed(seed);
        if !self.model.hidden.is_empty() {
            spec = spec.with_hidden(self.model.hidden.clone());
        }
        spec.kernel_size = self.model.kernel_size;
        spec
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch_size: (t.batch_size > 0).then_some(t.batch_size),
            seed,
            clip_norm: (t.clip_norm > 0.0).then_some(t.clip_norm),
            patience: (t.patience > 0).then_some(t.patience),
            validation_fraction: t.validation_fraction,
            adam: AdamConfig {
                learning_rate: t.learning_rate,
                beta1: t.beta1,
                beta2: t.beta2,
                epsilon: t.epsilon,
            },
        }
    }

    /// Default configuration as TOML, with a note on the required key.
    pub fn defaults_toml() -> String {
        let mut cfg = PipelineConfig::default();
        cfg.data.dir = Some(PathBuf::from("data"));
        format!(
            "# `data.dir` is required; every other key may be omitted.\n{}",
            toml::to_string(&cfg).expect("defaults serialize")
        )
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig, ConfigError> {
        PipelineConfig::from_toml_str(text, Path::new("/base"))
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse("[data]\ndir = \"stations\"\n").unwrap();
        assert_eq!(c.data_dir(), Path::new("/base/stations"));
        assert_eq!(c.output_dir, Path::new("/base/out"));
        assert_eq!(c.features.window, 7);
        assert_eq!(c.features.horizon, 3);
        assert_eq!(c.training.quantiles, vec![0.05, 0.5, 0.95]);
        assert_eq!(c.training.learning_rate, 0.001);
        assert_eq!((c.training.beta1, c.training.beta2), (0.89, 0.97));
        assert_eq!(c.data.train_fraction, 0.6);
    }

    #[test]
    fn missing_data_dir_is_named() {
        let err = parse("seed = 1\n").unwrap_err();
        assert!(err.to_string().contains("data.dir"), "{err}");
        let err = parse("[data]\ntrain_fraction = 0.5\n").unwrap_err();
        assert!(matches!(err, ConfigError::Missing("data.dir")));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse("[data]\ndir = \"d\"\nbogus = 1\n").is_err());
        assert!(parse("colour = 1\n[data]\ndir = \"d\"\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for bad in [
            "[training]\nquantiles = [0.1, 0.5, 0.9]",
            "[data]\ndir = \"d\"\ntrain_fraction = 1.0",
            "[extremes]\nrecurrence_years = [1.0]",
            "[calibration]\npopulation = 2",
            "[features]\nwindow = 0",
            "[training]\nepochs = 0",
        ] {
            let text = if bad.contains("[data]") {
                bad.to_string()
            } else {
                format!("[data]\ndir = \"d\"\n{bad}\n")
            };
            assert!(parse(&text).is_err(), "{bad}");
        }
    }

    #[test]
    fn defaults_roundtrip_and_hash_is_stable() {
        let text = PipelineConfig::defaults_toml();
        let a = parse(&text).unwrap();
        let b = parse(&text).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.seed += 1;
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn station_seeds_differ() {
        let c = parse("[data]\ndir = \"d\"\n").unwrap();
        let a = c.station_seed("a", SeedStream::Calibration);
        assert_eq!(a, c.station_seed("a", SeedStream::Calibration));
        assert_ne!(a, c.station_seed("b", SeedStream::Calibration));
        assert_ne!(a, c.station_seed("a", SeedStream::Training));
    }

    #[test]
    fn derived_configs() {
        let c = parse("[data]\ndir = \"d\"\n[training]\nbatch_size = 0\nclip_norm = 0.0\n[model]\narchitecture = \"mlp\"\nhidden = [8]\n").unwrap();
        let t = c.train_config(3);
        assert_eq!((t.batch_size, t.clip_norm, t.seed), (None, None, 3));
        let s = c.model_spec(9);
        assert_eq!(s.hidden, vec![8]);
        assert_eq!((s.window, s.input_width, s.horizon, s.seed), (7, 9, 3, 9));
    }
}
