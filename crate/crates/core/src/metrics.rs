//! Point and interval skill scores over an `M × T` grid of forecasts.
//!
//! All functions take flat slices in row-major order; only the total
//! element count matters, so callers may pass any aligned layout.

use serde::{Deserialize, Serialize};

/// Interval-score significance for a 90% interval.
pub const DEFAULT_DELTA: f64 = 0.1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no values")]
    Empty,
    #[error("observations are constant; NSE undefined")]
    ConstantObservations,
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
}

fn check(a: &[f64], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

fn sum_sq_err(pred: &[f64], obs: &[f64]) -> f64 {
    pred.iter().zip(obs).map(|(p, o)| (p - o) * (p - o)).sum()
}

pub fn rmse(pred: &[f64], obs: &[f64]) -> Result<f64, MetricError> {
    check(pred, obs)?;
    Ok((sum_sq_err(pred, obs) / obs.len() as f64).sqrt())
}

/// Nash–Sutcliffe efficiency against the grand mean of `obs`.
pub fn nse(pred: &[f64], obs: &[f64]) -> Result<f64, MetricError> {
    check(pred, obs)?;
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let denom: f64 = obs.iter().map(|o| (o - mean) * (o - mean)).sum();
    if denom <= 0.0 {
        return Err(MetricError::ConstantObservations);
    }
    Ok(1.0 - sum_sq_err(pred, obs) / denom)
}

pub fn interval_score(
    lower: &[f64],
    upper: &[f64],
    obs: &[f64],
    delta: f64,
) -> Result<f64, MetricError> {
    check(lower, obs)?;
    check(upper, obs)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MetricError::InvalidDelta(delta));
    }
    let k = 2.0 / delta;
    let total: f64 = lower
        .iter()
        .zip(upper)
        .zip(obs)
        .map(|((&l, &u), &q)| {
            let mut s = u - l;
            if q < l {
                s += k * (l - q);
            }
            if q > u {
                s += k * (q - u);
            }
            s
        })
        .sum();
    Ok(total / obs.len() as f64)
}

/// Fraction of observations inside `[lower, upper]`.
pub fn coverage(lower: &[f64], upper: &[f64], obs: &[f64]) -> Result<f64, MetricError> {
    check(lower, obs)?;
    check(upper, obs)?;
    let inside = lower
        .iter()
        .zip(upper)
        .zip(obs)
        .filter(|((l, u), q)| *l <= *q && *q <= *u)
        .count();
    Ok(inside as f64 / obs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub station_id: String,
    pub split: String,
    pub rmse: f64,
    pub nse: f64,
    pub interval_score: f64,
    pub m: usize,
    pub t: usize,
}

impl MetricReport {
    /// Scores the median against `obs` and the outer quantiles as a 90%
    /// interval. All slices are `m × t` row-major.
    #[allow(clippy::too_many_arguments)]
    pub fn compute(
        station_id: &str,
        split: &str,
        q05: &[f64],
        q50: &[f64],
        q95: &[f64],
        obs: &[f64],
        m: usize,
        t: usize,
    ) -> Result<Self, MetricError> {
        if m * t != obs.len() {
            return Err(MetricError::LengthMismatch(m * t, obs.len()));
        }
        Ok(MetricReport {
            station_id: station_id.to_string(),
            split: split.to_string(),
            rmse: rmse(q50, obs)?,
            nse: nse(q50, obs)?,
            interval_score: interval_score(q05, q95, obs, DEFAULT_DELTA)?,
            m,
            t,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rmse_cases() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[3.0], &[1.0]).unwrap(), 2.0);
        let r = rmse(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((r - 3.5355339059327378).abs() < 1e-12);
        assert_eq!(rmse(&[1.0], &[]), Err(MetricError::LengthMismatch(1, 0)));
    }

    #[test]
    fn nse_cases() {
        let obs = [1.0, 2.0, 3.0, 6.0];
        assert_eq!(nse(&obs, &obs).unwrap(), 1.0);
        assert!(nse(&[3.0; 4], &obs).unwrap().abs() < 1e-15);
        assert!(nse(&[6.0, 3.0, 2.0, 1.0], &obs).unwrap() < 0.0);
        assert_eq!(
            nse(&[1.0, 1.0], &[2.0, 2.0]),
            Err(MetricError::ConstantObservations)
        );
    }

    #[test]
    fn interval_score_cases() {
        let is = |q: f64| interval_score(&[0.0], &[1.0], &[q], 0.1).unwrap();
        assert!((is(0.5) - 1.0).abs() < 1e-12);
        assert!((is(1.5) - 11.0).abs() < 1e-12);
        assert!((is(-0.2) - 5.0).abs() < 1e-12);
        assert!(interval_score(&[0.0], &[1.0], &[0.5], 0.0).is_err());
    }

    #[test]
    fn report_json_fields() {
        let r = MetricReport::compute(
            "s",
            "test",
            &[0.0, 0.0],
            &[1.0, 2.0],
            &[3.0, 3.0],
            &[1.0, 2.5],
            1,
            2,
        )
        .unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        for key in [
            "station_id",
            "split",
            "rmse",
            "nse",
            "interval_score",
            "m",
            "t",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    fn triples() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
        prop::collection::vec((-5.0f64..5.0, 0.0f64..5.0, -10.0f64..10.0), 1..40)
            .prop_map(|v| v.into_iter().map(|(l, w, q)| (l, l + w, q)).collect())
    }

    proptest! {
        #[test]
        fn score_at_least_mean_width(v in triples()) {
            let (l, u, q): (Vec<_>, Vec<_>, Vec<_>) =
                v.iter().fold((vec![], vec![], vec![]), |mut acc, &(a, b, c)| {
                    acc.0.push(a); acc.1.push(b); acc.2.push(c); acc
                });
            let s = interval_score(&l, &u, &q, 0.1).unwrap();
            let width = u.iter().zip(&l).map(|(a, b)| a - b).sum::<f64>() / l.len() as f64;
            prop_assert!(s >= width - 1e-12);
            let all_inside = l.iter().zip(&u).zip(&q).all(|((a, b), c)| a <= c && c <= b);
            if all_inside {
                prop_assert!((s - width).abs() < 1e-9);
            }
        }

        #[test]
        fn widening_covered_interval_costs(l in -5.0f64..5.0, w in 0.0f64..5.0, f in 0.0f64..=1.0, extra in 0.01f64..3.0) {
            let u = l + w;
            let q = l + f * w;
            let before = interval_score(&[l], &[u], &[q], 0.1).unwrap();
            let after = interval_score(&[l - extra], &[u], &[q], 0.1).unwrap();
            prop_assert!(after > before);
        }

        #[test]
        fn permutation_invariant(v in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 2..30), rot in 0usize..30) {
            let pred: Vec<f64> = v.iter().map(|p| p.0).collect();
            let obs: Vec<f64> = v.iter().map(|p| p.1).collect();
            let k = rot % pred.len();
            let mut p2 = pred.clone();
            let mut o2 = obs.clone();
            p2.rotate_left(k);
            o2.rotate_left(k);
            prop_assert!((rmse(&pred, &obs).unwrap() - rmse(&p2, &o2).unwrap()).abs() < 1e-12);
            if let (Ok(a), Ok(b)) = (nse(&pred, &obs), nse(&p2, &o2)) {
                prop_assert!((a - b).abs() < 1e-9 * a.abs().max(1.0));
            }
        }
    }
}
