use super::loss::tilted_loss_slice;
use super::{Model, NeuralError, Tensor};

/// Gradients smaller than this are compared in absolute rather than relative
/// terms.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter index (flattened across tensors) where the maximum occurred.
    pub worst_index: usize,
    pub checked: usize,
    /// Elements whose perturbation moved some prediction across the loss kink.
    pub skipped: usize,
}

/// Compares reverse-mode gradients of the tilted loss against central finite
/// differences, element by element over every parameter.
///
/// Relative error is `|a − n| / max(|a|, |n|, GRAD_FLOOR)`. A parameter is
/// skipped when the ±ε perturbation flips the branch of any prediction's
/// residual, since the loss is not differentiable there.
pub fn grad_check(
    model: &Model,
    inputs: &Tensor,
    targets: &Tensor,
    tau: f64,
    epsilon: f64,
) -> Result<GradCheckReport, NeuralError> {
    let (_, grads) = model.loss_and_grads(inputs, targets, tau)?;
    let branch = |pred: &Tensor| -> Vec<bool> {
        pred.data()
            .iter()
            .zip(targets.data())
            .map(|(p, q)| q >= p)
            .collect()
    };
    let base = branch(&model.predict(inputs)?);

    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        checked: 0,
        skipped: 0,
    };
    let mut flat = 0;
    for (ti, grad) in grads.iter().enumerate() {
        for ei in 0..grad.len() {
            let original = probe.params[ti].data()[ei];
            probe.params[ti].data_mut()[ei] = original + epsilon;
            let up = probe.predict(inputs)?;
            probe.params[ti].data_mut()[ei] = original - epsilon;
            let down = probe.predict(inputs)?;
            probe.params[ti].data_mut()[ei] = original;

            if branch(&up) != base || branch(&down) != base {
                report.skipped += 1;
            } else {
                let numeric = (tilted_loss_slice(up.data(), targets.data(), tau)
                    - tilted_loss_slice(down.data(), targets.data(), tau))
                    / (2.0 * epsilon);
                let analytic = grad.data()[ei];
                let denom = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
                let rel = (analytic - numeric).abs() / denom;
                if rel > report.max_rel_error {
                    report.max_rel_error = rel;
                    report.worst_index = flat;
                }
                report.checked += 1;
            }
            flat += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Architecture, ModelSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_models_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::new(
            vec![3, 5, 2],
            (0..30).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let y = Tensor::new(
            vec![3, 2],
            (0..6).map(|_| rng.random_range(-2.0..2.0)).collect(),
        )
        .unwrap();
        for (arch, hidden) in [
            (Architecture::Mlp, vec![4]),
            (Architecture::Rnn, vec![3]),
            (Architecture::Cnn1d, vec![2, 3]),
            (Architecture::LstmEncdec, vec![3]),
        ] {
            let model = Model::new(
                ModelSpec::new(arch, 5, 2, 2)
                    .with_hidden(hidden)
                    .with_seed(1),
            )
            .unwrap();
            let r = grad_check(&model, &x, &y, 0.3, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{arch:?}: {r:?}");
            assert!(r.checked > 0);
        }
    }
}
