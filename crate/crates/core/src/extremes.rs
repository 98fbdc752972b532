//! GEV flood thresholds, the flood risk indicator and its true-positive rate.
//!
//! The shape parameter ζ follows the convention in which the CDF is
//!
//! ```text
//! F(x) = exp(−(1 − ζu)^(1/ζ)),   u = (x − μ)/σ
//! ```
//!
//! so ζ < 0 is the heavy-tailed (Fréchet) case and ζ > 0 has a finite upper
//! endpoint μ + σ/ζ. This is the negative of the ξ used by most statistics
//! packages.

use std::io::Write;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

/// Years with fewer present days are left out of the annual maxima.
pub const MIN_YEAR_DAYS: usize = 300;
pub const MIN_YEARS: usize = 5;

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
/// Below this |ζ| the Gumbel limit is used.
const GUMBEL_EPS: f64 = 1e-12;
/// Shape values searched by the likelihood fit. Short records of maxima can
/// have a likelihood that grows without bound as ζ → −∞.
pub const SHAPE_RANGE: (f64, f64) = (-1.0, 1.0);

#[derive(Debug, thiserror::Error)]
pub enum ExtremesError {
    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),
    #[error("recurrence interval {0} years is below 2")]
    InvalidRecurrence(f64),
    #[error("invalid GEV parameters: {0:?}")]
    InvalidParams(GevParams),
    #[error("{found} qualifying years, need at least {needed}")]
    TooFewYears { needed: usize, found: usize },
    #[error("annual maxima have zero variance")]
    ZeroVariance,
    #[error("maxima contain non-finite values")]
    NonFinite,
    #[error("GEV fit did not converge; initial estimates {initial:?}")]
    NonConvergence { initial: GevParams },
    #[error("forecast and observation lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("horizon must be positive and divide the forecast length")]
    InvalidHorizon,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub zeta: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl GevParams {
    pub fn new(zeta: f64, mu: f64, sigma: f64) -> Result<Self, ExtremesError> {
        let p = GevParams { zeta, mu, sigma };
        if !(zeta.is_finite() && mu.is_finite() && sigma.is_finite() && sigma > 0.0) {
            return Err(ExtremesError::InvalidParams(p));
        }
        Ok(p)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let u = (x - self.mu) / self.sigma;
        if self.zeta.abs() < GUMBEL_EPS {
            return (-(-u).exp()).exp();
        }
        let y = 1.0 - self.zeta * u;
        if y <= 0.0 {
            // beyond the upper endpoint for ζ > 0, below the lower one for ζ < 0
            return if self.zeta > 0.0 { 1.0 } else { 0.0 };
        }
        (-(y.ln() / self.zeta).exp()).exp()
    }

    /// Log density; −∞ outside the support.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let u = (x - self.mu) / self.sigma;
        if self.zeta.abs() < GUMBEL_EPS {
            return -self.sigma.ln() - u - (-u).exp();
        }
        let arg = -self.zeta * u;
        if arg <= -1.0 {
            return f64::NEG_INFINITY;
        }
        let ln_y = arg.ln_1p();
        -self.sigma.ln() + (1.0 / self.zeta - 1.0) * ln_y - (ln_y / self.zeta).exp()
    }

    pub fn log_likelihood(&self, xs: &[f64]) -> f64 {
        xs.iter().map(|&x| self.log_pdf(x)).sum()
    }
}

/// Inverse CDF.
pub fn gev_quantile(params: &GevParams, p: f64) -> Result<f64, ExtremesError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(ExtremesError::InvalidProbability(p));
    }
    let ll = (-p.ln()).ln();
    let GevParams { zeta, mu, sigma } = *params;
    if zeta.abs() < GUMBEL_EPS {
        return Ok(mu - sigma * ll);
    }
    // (1 − (−ln p)^ζ)/ζ without cancellation near ζ = 0
    Ok(mu + sigma * (-(zeta * ll).exp_m1()) / zeta)
}

/// Largest value in each calendar year with at least [`MIN_YEAR_DAYS`]
/// finite observations.
pub fn annual_maxima(
    dates: &[NaiveDate],
    values: &[f64],
) -> Result<Vec<(i32, f64)>, ExtremesError> {
    if dates.len() != values.len() {
        return Err(ExtremesError::LengthMismatch(dates.len(), values.len()));
    }
    let mut out = Vec::new();
    let mut i = 0;
    while i < dates.len() {
        let year = dates[i].year();
        let mut present = 0;
        let mut max = f64::NEG_INFINITY;
        while i < dates.len() && dates[i].year() == year {
            if values[i].is_finite() {
                present += 1;
                max = max.max(values[i]);
            }
            i += 1;
        }
        if present >= MIN_YEAR_DAYS {
            out.push((year, max));
        }
    }
    if out.len() < MIN_YEARS {
        return Err(ExtremesError::TooFewYears {
            needed: MIN_YEARS,
            found: out.len(),
        });
    }
    Ok(out)
}

/// Estimates from the first three sample L-moments.
pub fn lmoment_estimates(xs: &[f64]) -> Result<GevParams, ExtremesError> {
    let mut x = xs.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        let i = i as f64;
        b0 += v;
        b1 += v * i / (n - 1.0);
        b2 += v * i * (i - 1.0) / ((n - 1.0) * (n - 2.0));
    }
    b0 /= n;
    b1 /= n;
    b2 /= n;
    let l1 = b0;
    let l2 = 2.0 * b1 - b0;
    let l3 = 6.0 * b2 - 6.0 * b1 + b0;
    if l2 <= 0.0 {
        return Err(ExtremesError::ZeroVariance);
    }
    let t3 = l3 / l2;
    let c = 2.0 / (3.0 + t3) - 2f64.ln() / 3f64.ln();
    let k = 7.8590 * c + 2.9554 * c * c;
    if k.abs() < 1e-6 {
        let sigma = l2 / 2f64.ln();
        return GevParams::new(0.0, l1 - EULER_GAMMA * sigma, sigma);
    }
    let g = gamma(1.0 + k);
    let sigma = l2 * k / ((1.0 - 2f64.powf(-k)) * g);
    let mu = l1 - sigma * (1.0 - g) / k;
    GevParams::new(k, mu, sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GevFit {
    pub params: GevParams,
    pub log_likelihood: f64,
    pub initial: GevParams,
    pub iterations: usize,
}

/// Maximum-likelihood GEV fit, started from L-moment estimates and searched
/// over (ζ, μ, ln σ) with Nelder–Mead, with ζ confined to [`SHAPE_RANGE`].
pub fn fit_gev(maxima: &[f64]) -> Result<GevFit, ExtremesError> {
    if maxima.len() < MIN_YEARS {
        return Err(ExtremesError::TooFewYears {
            needed: MIN_YEARS,
            found: maxima.len(),
        });
    }
    if maxima.iter().any(|v| !v.is_finite()) {
        return Err(ExtremesError::NonFinite);
    }
    let initial = lmoment_estimates(maxima)?;
    let nll = |v: &[f64; 3]| {
        if !(SHAPE_RANGE.0..=SHAPE_RANGE.1).contains(&v[0]) {
            return f64::INFINITY;
        }
        let p = GevParams {
            zeta: v[0],
            mu: v[1],
            sigma: v[2].exp(),
        };
        let ll = p.log_likelihood(maxima);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let mut start = [
        initial.zeta.clamp(SHAPE_RANGE.0 + 0.1, SHAPE_RANGE.1 - 0.1),
        initial.mu,
        initial.sigma.ln(),
    ];
    if !nll(&start).is_finite() {
        // L-moment shape can leave an observation outside the support
        start[0] = 0.0;
    }
    if !nll(&start).is_finite() {
        return Err(ExtremesError::NonConvergence { initial });
    }
    let steps = [0.1, 0.2 * initial.sigma, 0.2];
    let mut iterations = 0;
    let mut best = start;
    // restarting rebuilds a fresh simplex, guarding against early collapse
    for _ in 0..3 {
        let (x, it, converged) = nelder_mead(&nll, best, steps, 1e-10, 5000);
        iterations += it;
        if !converged {
            return Err(ExtremesError::NonConvergence { initial });
        }
        let moved = x.iter().zip(&best).any(|(a, b)| (a - b).abs() > 1e-7);
        best = x;
        if !moved {
            break;
        }
    }
    let params = GevParams::new(best[0], best[1], best[2].exp())
        .map_err(|_| ExtremesError::NonConvergence { initial })?;
    Ok(GevFit {
        params,
        log_likelihood: params.log_likelihood(maxima),
        initial,
        iterations,
    })
}

/// Minimizes `f` from `x0`. Returns the best vertex, iterations used and
/// whether the tolerance was met.
fn nelder_mead<F: Fn(&[f64; 3]) -> f64>(
    f: &F,
    x0: [f64; 3],
    steps: [f64; 3],
    tol: f64,
    max_iter: usize,
) -> ([f64; 3], usize, bool) {
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, f(&x0)));
    for d in 0..3 {
        let mut x = x0;
        x[d] += steps[d];
        simplex.push((x, f(&x)));
    }
    let lerp = |a: &[f64; 3], b: &[f64; 3], t: f64| -> [f64; 3] {
        [
            a[0] + t * (b[0] - a[0]),
            a[1] + t * (b[1] - a[1]),
            a[2] + t * (b[2] - a[2]),
        ]
    };

    for iter in 0..max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (lo, hi) = (simplex[0].1, simplex[3].1);
        let spread = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if (hi - lo).abs() <= tol * (1.0 + lo.abs())
            && spread <= 1e-8 * (1.0 + simplex[0].0.iter().map(|v| v.abs()).fold(0.0, f64::max))
        {
            return (simplex[0].0, iter, true);
        }
        let mut centroid = [0.0; 3];
        for (x, _) in &simplex[..3] {
            for d in 0..3 {
                centroid[d] += x[d] / 3.0;
            }
        }
        let worst = simplex[3].0;
        let xr = lerp(&centroid, &worst, -1.0);
        let fr = f(&xr);
        if fr < simplex[0].1 {
            let xe = lerp(&centroid, &worst, -2.0);
            let fe = f(&xe);
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[3].1 {
                let x = lerp(&centroid, &xr, 0.5);
                (x, f(&x))
            } else {
                let x = lerp(&centroid, &worst, 0.5);
                (x, f(&x))
            };
            if fc < simplex[3].1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    v.0 = lerp(&best, &v.0, 0.5);
                    v.1 = f(&v.0);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (simplex[0].0, max_iter, false)
}

/// Streamflow exceeded on average once every `k_years`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FloodThreshold {
    pub k_years: f64,
    pub p: f64,
    pub gamma: f64,
}

impl FloodThreshold {
    pub fn from_gev(params: &GevParams, k_years: f64) -> Result<Self, ExtremesError> {
        if !(k_years >= 2.0 && k_years.is_finite()) {
            return Err(ExtremesError::InvalidRecurrence(k_years));
        }
        let p = 1.0 - 1.0 / k_years;
        Ok(FloodThreshold {
            k_years,
            p,
            gamma: gev_quantile(params, p)?,
        })
    }
}

/// Qualitative flood risk, ordered `Unlikely < Low < Moderate < High`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FloodRiskLevel {
    Unlikely,
    Low,
    Moderate,
    High,
}

impl FloodRiskLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            FloodRiskLevel::Unlikely => "Unlikely",
            FloodRiskLevel::Low => "Low",
            FloodRiskLevel::Moderate => "Moderate",
            FloodRiskLevel::High => "High",
        }
    }
}

impl std::fmt::Display for FloodRiskLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn horizon_max(window: &[[f64; 3]], col: usize) -> f64 {
    window
        .iter()
        .map(|r| r[col])
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Risk level for one forecast origin. `window` holds `(q05, q50, q95)` for
/// each lead day; the lowest quantile whose horizon maximum exceeds `gamma`
/// sets the level.
pub fn flood_risk(window: &[[f64; 3]], gamma: f64) -> FloodRiskLevel {
    if horizon_max(window, 0) > gamma {
        FloodRiskLevel::High
    } else if horizon_max(window, 1) > gamma {
        FloodRiskLevel::Moderate
    } else if horizon_max(window, 2) > gamma {
        FloodRiskLevel::Low
    } else {
        FloodRiskLevel::Unlikely
    }
}

/// Binary flood labels, one per forecast origin.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FloodEventLabels {
    /// Observed flow exceeded the threshold on some lead day.
    pub observed: Vec<bool>,
    /// Some predicted quantile exceeded the threshold on some lead day.
    pub predicted: Vec<bool>,
}

impl FloodEventLabels {
    pub fn true_positives(&self) -> usize {
        self.observed
            .iter()
            .zip(&self.predicted)
            .filter(|(o, p)| **o && **p)
            .count()
    }

    pub fn observed_positives(&self) -> usize {
        self.observed.iter().filter(|o| **o).count()
    }

    /// `None` when no flood was observed.
    pub fn tpr(&self) -> Option<f64> {
        match self.observed_positives() {
            0 => None,
            n => Some(self.true_positives() as f64 / n as f64),
        }
    }
}

/// Labels every origin window and returns the true-positive rate.
///
/// `forecast` and `observed` are `M × horizon` in row-major order.
pub fn flood_labels_and_tpr(
    forecast: &[[f64; 3]],
    observed: &[f64],
    horizon: usize,
    gamma: f64,
) -> Result<(FloodEventLabels, Option<f64>), ExtremesError> {
    if forecast.len() != observed.len() {
        return Err(ExtremesError::LengthMismatch(
            forecast.len(),
            observed.len(),
        ));
    }
    if horizon == 0 || !forecast.len().is_multiple_of(horizon) {
        return Err(ExtremesError::InvalidHorizon);
    }
    let mut labels = FloodEventLabels::default();
    for (f, o) in forecast.chunks(horizon).zip(observed.chunks(horizon)) {
        labels.observed.push(o.iter().any(|&q| q > gamma));
        labels
            .predicted
            .push(f.iter().any(|r| r.iter().any(|&q| q > gamma)));
    }
    let tpr = labels.tpr();
    Ok((labels, tpr))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriRecord {
    pub origin_date: NaiveDate,
    pub k_years: f64,
    pub gamma: f64,
    pub level: FloodRiskLevel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TprRecord {
    pub station_id: String,
    pub k_years: f64,
    pub tpr: Option<f64>,
}

pub fn write_fri_csv<W: Write>(w: W, records: &[FriRecord]) -> Result<(), ExtremesError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_tpr_csv<W: Write>(w: W, records: &[TprRecord]) -> Result<(), ExtremesError> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(r)?;
    }
    out.flush().map_err(csv::Error::from)?;
    Ok(())
}
