//! Differential-evolution calibration of GR4J, plus a synthetic catchment
//! generator used as a calibration oracle.

use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gr4j::{simulate, Gr4jError, Gr4jParams, Gr4jSetup};
use crate::ingest::ForcingSeries;
use crate::metrics;

/// Search bounds for (x1, x2, x3, x4).
pub const GR4J_BOUNDS: [(f64, f64); 4] = [(1.0, 2000.0), (-10.0, 10.0), (1.0, 500.0), (0.5, 10.0)];

#[derive(Debug, thiserror::Error)]
pub enum CalibrationError {
    #[error("invalid DE config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] Gr4jError),
    #[error("objective: {0}")]
    Metric(#[from] metrics::MetricError),
    #[error("no candidate produced a finite objective")]
    NoFiniteCandidate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeConfig {
    pub population: usize,
    /// Differential weight F.
    pub weight: f64,
    /// Crossover rate CR.
    pub crossover: f64,
    pub max_generations: usize,
    /// Stop after this many generations without improvement above `tolerance`.
    pub patience: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub bounds: Vec<(f64, f64)>,
}

impl Default for DeConfig {
    fn default() -> Self {
        DeConfig {
            population: 40,
            weight: 0.7,
            crossover: 0.9,
            max_generations: 300,
            patience: 50,
            tolerance: 1e-8,
            seed: 0,
            bounds: GR4J_BOUNDS.to_vec(),
        }
    }
}

impl DeConfig {
    pub fn validate(&self) -> Result<(), CalibrationError> {
        let bad = |m: String| Err(CalibrationError::InvalidConfig(m));
        if self.population < 4 {
            return bad(format!("population {} < 4", self.population));
        }
        if !(self.weight > 0.0 && self.weight <= 2.0) {
            return bad(format!("weight {} outside (0, 2]", self.weight));
        }
        if !(0.0..=1.0).contains(&self.crossover) {
            return bad(format!("crossover {} outside [0, 1]", self.crossover));
        }
        if self.max_generations == 0 {
            return bad("max_generations must be at least 1".into());
        }
        if self.bounds.is_empty() {
            return bad("no bounds".into());
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(format!(
                    "bounds[{i}] = ({lo}, {hi}) must satisfy low < high"
                ));
            }
        }
        Ok(())
    }
}

/// Outcome of a maximizing DE run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeResult {
    pub best: Vec<f64>,
    pub best_score: f64,
    /// Best score after initialization and after every generation.
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
}

fn score<F: Fn(&[f64]) -> f64 + Sync>(objective: &F, xs: &[Vec<f64>]) -> Vec<f64> {
    xs.par_iter()
        .map(|x| {
            let s = objective(x);
            if s.is_finite() {
                s
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in v.iter().enumerate() {
        if s > v[best] {
            best = i;
        }
    }
    best
}

/// Maximizes `objective` with DE/best/1/bin.
///
/// Trial vectors are drawn from the seeded stream before any evaluation, so
/// evaluating a generation in parallel gives the same result as a serial run.
pub fn differential_evolution<F>(
    objective: F,
    config: &DeConfig,
) -> Result<DeResult, CalibrationError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let np = config.population;
    let dim = config.bounds.len();

    let mut pop: Vec<Vec<f64>> = (0..np)
        .map(|_| {
            config
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect();
    let mut fitness = score(&objective, &pop);
    let mut evaluations = np;
    let mut best = argmax(&fitness);
    let mut trace = vec![fitness[best]];
    let mut stagnant = 0;
    let mut generations = 0;

    for _ in 0..config.max_generations {
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let r1 = loop {
                    let r = rng.random_range(0..np);
                    if r != i {
                        break r;
                    }
                };
                let r2 = loop {
                    let r = rng.random_range(0..np);
                    if r != i && r != r1 {
                        break r;
                    }
                };
                let forced = rng.random_range(0..dim);
                (0..dim)
                    .map(|j| {
                        let cross: f64 = rng.random();
                        if j == forced || cross < config.crossover {
                            let (lo, hi) = config.bounds[j];
                            (pop[best][j] + config.weight * (pop[r1][j] - pop[r2][j])).clamp(lo, hi)
                        } else {
                            pop[i][j]
                        }
                    })
                    .collect()
            })
            .collect();
        let trial_fitness = score(&objective, &trials);
        evaluations += np;
        generations += 1;

        for (i, (trial, f)) in trials.into_iter().zip(trial_fitness).enumerate() {
            if f >= fitness[i] {
                pop[i] = trial;
                fitness[i] = f;
            }
        }
        let previous = fitness[best];
        best = argmax(&fitness);
        trace.push(fitness[best]);

        if fitness[best] - previous > config.tolerance {
            stagnant = 0;
        } else {
            stagnant += 1;
            if config.patience > 0 && stagnant >= config.patience {
                break;
            }
        }
    }

    if !fitness[best].is_finite() {
        return Err(CalibrationError::NoFiniteCandidate);
    }
    Ok(DeResult {
        best: pop[best].clone(),
        best_score: fitness[best],
        trace,
        evaluations,
        generations,
    })
}

/// NSE of a GR4J simulation against observed streamflow, skipping the
/// warm-up days.
pub fn nse_objective(
    params: &Gr4jParams,
    series: &ForcingSeries,
    setup: &Gr4jSetup,
) -> Result<f64, CalibrationError> {
    let sim = simulate(
        params,
        series,
        crate::gr4j::Gr4jState::initial(params, setup.s0_frac, setup.r0_frac),
        setup.warmup_days,
    )?;
    Ok(metrics::nse(
        &sim.q,
        &series.streamflow[setup.warmup_days..],
    )?)
}

/// Saved calibration outcome, with the config and seed that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub station_id: String,
    pub setup: Gr4jSetup,
    pub nse: f64,
    pub trace: Vec<f64>,
    pub evaluations: usize,
    pub generations: usize,
    pub de: DeConfig,
}

impl CalibrationResult {
    pub fn params(&self) -> Gr4jParams {
        self.setup.params
    }
}

/// Calibrates the four GR4J parameters by maximizing NSE. `template`
/// supplies the initial-state fractions and warm-up length; its parameters
/// are ignored.
pub fn calibrate_gr4j(
    series: &ForcingSeries,
    template: &Gr4jSetup,
    de: &DeConfig,
) -> Result<CalibrationResult, CalibrationError> {
    if de.bounds.len() != 4 {
        return Err(CalibrationError::InvalidConfig(format!(
            "GR4J needs 4 bounds, got {}",
            de.bounds.len()
        )));
    }
    if de.bounds[0].0 <= 0.0 || de.bounds[2].0 <= 0.0 || de.bounds[3].0 < 0.5 {
        return Err(CalibrationError::InvalidConfig(
            "bounds admit invalid GR4J parameters".into(),
        ));
    }
    // fail early on gaps or constant flow rather than returning -inf everywhere
    nse_objective(&template.params, series, template)?;

    let result = differential_evolution(
        |x| match Gr4jParams::from_slice(x) {
            Ok(p) => nse_objective(&p, series, template).unwrap_or(f64::NEG_INFINITY),
            Err(_) => f64::NEG_INFINITY,
        },
        de,
    )?;
    let mut setup = *template;
    setup.params = Gr4jParams::from_slice(&result.best)?;
    Ok(CalibrationResult {
        station_id: series.station_id.clone(),
        setup,
        nse: result.best_score,
        trace: result.trace,
        evaluations: result.evaluations,
        generations: result.generations,
        de: de.clone(),
    })
}

/// Generates a synthetic catchment driven by seasonal weather, whose
/// streamflow is the GR4J response to that weather plus Gaussian noise
/// truncated at zero.
///
/// Simulation starts from `setup`'s initial state with no warm-up, so at
/// zero noise the streamflow equals [`simulate`] output day for day.
pub fn synth_catchment(
    station_id: &str,
    setup: &Gr4jSetup,
    n_days: usize,
    seed: u64,
    noise_std: f64,
) -> Result<ForcingSeries, Gr4jError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let burst = LogNormal::new(1.6, 1.0).expect("valid lognormal");
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let start = NaiveDate::from_ymd_opt(1980, 1, 1).expect("valid date");
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut s = ForcingSeries::empty(station_id);
    for i in 0..n_days {
        let date = start + chrono::Days::new(i as u64);
        let phase = two_pi * f64::from(date.ordinal0()) / 365.25;
        let season = phase.sin();
        let wet_prob = 0.45 + 0.2 * (phase + 1.0).cos();
        let wet: f64 = rng.random();
        let p = if wet < wet_prob {
            burst.sample(&mut rng)
        } else {
            0.0
        };
        let e = (2.5 + 1.8 * season).max(0.2);
        let tmin = 8.0 + 6.0 * season + 1.5 * unit.sample(&mut rng);
        let tmax = tmin + 10.0 + unit.sample(&mut rng).abs();
        let vprp = (11.0 + 4.0 * season + unit.sample(&mut rng)).max(0.5);

        s.dates.push(date);
        s.precip.push(p);
        s.evap.push(e);
        s.tmin.push(tmin);
        s.tmax.push(tmax);
        s.vprp.push(vprp);
        s.streamflow.push(0.0);
    }
    let q = simulate(&setup.params, &s, setup.initial_state(), 0)?.q;
    s.streamflow = if noise_std > 0.0 {
        let noise = Normal::new(0.0, noise_std).expect("valid noise std");
        q.into_iter()
            .map(|v| (v + noise.sample(&mut rng)).max(0.0))
            .collect()
    } else {
        q
    };
    Ok(s)
}
