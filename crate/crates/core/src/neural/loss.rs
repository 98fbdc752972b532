//! Tilted (pinball) loss.
//!
//! For a residual `r = Q − Q̂` the per-element loss is `τ·r` when `r ≥ 0` and
//! `(τ − 1)·r` otherwise; the reported value is the mean over all elements.

use super::{NeuralError, Tensor};

#[inline]
pub(crate) fn tilted_element(pred: f64, target: f64, tau: f64) -> f64 {
    let r = target - pred;
    if r >= 0.0 {
        tau * r
    } else {
        (tau - 1.0) * r
    }
}

pub(crate) fn tilted_loss_slice(pred: &[f64], target: &[f64], tau: f64) -> f64 {
    let n = pred.len().max(1) as f64;
    pred.iter()
        .zip(target)
        .map(|(&p, &q)| tilted_element(p, q, tau))
        .sum::<f64>()
        / n
}

/// Accumulates `seed · ∂L/∂pred` into `out`. At the kink (`Q = Q̂`) the τ
/// branch is used.
pub(crate) fn tilted_loss_grad_slice(
    pred: &[f64],
    target: &[f64],
    tau: f64,
    seed: f64,
    out: &mut [f64],
) {
    let n = pred.len().max(1) as f64;
    for ((o, &p), &q) in out.iter_mut().zip(pred).zip(target) {
        let d = if q >= p { -tau } else { 1.0 - tau };
        *o += seed * d / n;
    }
}

/// Mean tilted loss over every element of two equally shaped tensors.
pub fn tilted_loss(pred: &Tensor, target: &Tensor, tau: f64) -> Result<f64, NeuralError> {
    if pred.shape() != target.shape() {
        return Err(NeuralError::ShapeMismatch {
            context: "tilted_loss",
            expected: target.shape().to_vec(),
            found: pred.shape().to_vec(),
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(NeuralError::InvalidQuantile(tau));
    }
    Ok(tilted_loss_slice(pred.data(), target.data(), tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(v: f64) -> Tensor {
        Tensor::new(vec![1, 1], vec![v]).unwrap()
    }

    #[test]
    fn single_element_cases() {
        // Q = 1, Q̂ = 0: τ·1
        assert!((tilted_loss(&one(0.0), &one(1.0), 0.95).unwrap() - 0.95).abs() < 1e-15);
        // Q = 0, Q̂ = 1: (τ − 1)·(−1)
        assert!((tilted_loss(&one(1.0), &one(0.0), 0.95).unwrap() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[3, 2]);
        assert!(tilted_loss(&a, &b, 0.5).is_err());
        assert!(tilted_loss(&a, &a, 0.0).is_err());
        assert!(tilted_loss(&a, &a, 1.0).is_err());
    }

    #[test]
    fn subgradient_branches() {
        let mut g = [0.0; 3];
        // target above, equal, below the prediction
        tilted_loss_grad_slice(&[0.0, 1.0, 2.0], &[1.0, 1.0, 1.0], 0.9, 1.0, &mut g);
        let n = 3.0;
        assert!((g[0] + 0.9 / n).abs() < 1e-15);
        assert!((g[1] + 0.9 / n).abs() < 1e-15);
        assert!((g[2] - 0.1 / n).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn median_is_half_mae(pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40)) {
            let (p, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let n = p.len();
            let pt = Tensor::new(vec![n, 1], p.clone()).unwrap();
            let qt = Tensor::new(vec![n, 1], q.clone()).unwrap();
            let mae = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / n as f64;
            let l = tilted_loss(&pt, &qt, 0.5).unwrap();
            prop_assert!((l - 0.5 * mae).abs() < 1e-9);
        }

        #[test]
        fn nonnegative_and_zero_only_at_target(
            pairs in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 1..40),
            tau in 0.01f64..0.99,
        ) {
            let (p, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let l = tilted_loss_slice(&p, &q, tau);
            prop_assert!(l >= 0.0);
            prop_assert_eq!(tilted_loss_slice(&q, &q, tau), 0.0);
            if p.iter().zip(&q).any(|(a, b)| a != b) {
                prop_assert!(l > 0.0);
            }
        }

        #[test]
        fn convex_in_prediction(
            a in -20.0f64..20.0, b in -20.0f64..20.0, q in -20.0f64..20.0,
            w in 0.0f64..1.0, tau in 0.01f64..0.99,
        ) {
            let mid = w * a + (1.0 - w) * b;
            let lhs = tilted_element(mid, q, tau);
            let rhs = w * tilted_element(a, q, tau) + (1.0 - w) * tilted_element(b, q, tau);
            prop_assert!(lhs <= rhs + 1e-9);
        }
    }
}
