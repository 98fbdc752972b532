use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{clip_grad_norm, AdamConfig, AdamState};
use super::loss::tilted_loss;
use super::{Model, ModelSpec, NeuralError, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without validation improvement; the best
    /// validation parameters are restored. Requires `validation_fraction > 0`.
    pub patience: Option<usize>,
    /// Trailing (most recent) fraction of windows held out for validation.
    pub validation_fraction: f64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: None,
            seed: 0,
            clip_norm: Some(5.0),
            patience: None,
            validation_fraction: 0.0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        if self.epochs == 0 {
            return Err(NeuralError::InvalidConfig("epochs must be ≥ 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(NeuralError::InvalidConfig("batch size must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(NeuralError::InvalidConfig(
                "validation fraction must be in [0, 1)".into(),
            ));
        }
        if self.patience.is_some() && self.validation_fraction == 0.0 {
            return Err(NeuralError::InvalidConfig(
                "early stopping needs a validation fraction".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: Model,
    pub tau: f64,
    /// Full training-set loss before the first update.
    pub initial_loss: f64,
    /// Full training-set loss of the returned parameters.
    pub final_loss: f64,
    pub best_epoch: usize,
    pub trace: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Writes the trace as `epoch,loss` rows.
    pub fn write_trace_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,loss")?;
        for r in &self.trace {
            writeln!(w, "{},{}", r.epoch, r.loss)?;
        }
        Ok(())
    }
}

/// Trains one quantile model with Adam on the tilted loss.
///
/// `inputs` is `M×α×F`, `targets` is `M×H`. Windows are assumed to be in time
/// order, so the validation split takes the last ones.
pub fn train_quantile_model(
    spec: &ModelSpec,
    inputs: &Tensor,
    targets: &Tensor,
    tau: f64,
    config: &TrainConfig,
) -> Result<TrainedModel, NeuralError> {
    config.validate()?;
    if !(tau > 0.0 && tau < 1.0) {
        return Err(NeuralError::InvalidQuantile(tau));
    }
    let m = inputs.rows();
    if m == 0 {
        return Err(NeuralError::EmptyData);
    }
    if targets.shape() != [m, spec.horizon] {
        return Err(NeuralError::ShapeMismatch {
            context: "training targets",
            expected: vec![m, spec.horizon],
            found: targets.shape().to_vec(),
        });
    }

    let n_val = ((m as f64) * config.validation_fraction).round() as usize;
    let n_train = m - n_val;
    if n_train == 0 {
        return Err(NeuralError::EmptyData);
    }
    let (x_train, y_train) = (
        inputs.slice_rows(0, n_train),
        targets.slice_rows(0, n_train),
    );
    let val = (n_val > 0).then(|| {
        (
            inputs.slice_rows(n_train, m),
            targets.slice_rows(n_train, m),
        )
    });

    let mut model = Model::new(spec.clone())?;
    let mut adam = AdamState::new(config.adam, &model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let batch = config.batch_size.unwrap_or(n_train).min(n_train);
    let mut order: Vec<usize> = (0..n_train).collect();

    let eval = |model: &Model, x: &Tensor, y: &Tensor| -> Result<f64, NeuralError> {
        tilted_loss(&model.predict(x)?, y, tau)
    };
    let initial_loss = eval(&model, &x_train, &y_train)?;

    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Vec<Tensor>)> = None;
    let mut stale = 0;

    for epoch in 1..=config.epochs {
        if batch < n_train {
            order.shuffle(&mut rng);
        }
        let mut sum = 0.0;
        let mut count = 0;
        for chunk in order.chunks(batch) {
            let (xb, yb) = if batch == n_train {
                (x_train.clone(), y_train.clone())
            } else {
                (x_train.select_rows(chunk), y_train.select_rows(chunk))
            };
            let (loss, mut grads) = model.loss_and_grads(&xb, &yb, tau)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(NeuralError::Diverged { epoch });
            }
            if let Some(max) = config.clip_norm {
                clip_grad_norm(&mut grads, max);
            }
            adam.step(&mut model.params, &grads);
            sum += loss * chunk.len() as f64;
            count += chunk.len();
        }
        let loss = sum / count as f64;

        let val_loss = match &val {
            Some((xv, yv)) => Some(eval(&model, xv, yv)?),
            None => None,
        };
        if let Some(vl) = val_loss {
            if !vl.is_finite() {
                return Err(NeuralError::Diverged { epoch });
            }
            if best.as_ref().is_none_or(|(b, _, _)| vl < *b) {
                best = Some((vl, epoch, model.params.clone()));
                stale = 0;
            } else {
                stale += 1;
            }
        }
        trace.push(EpochRecord {
            epoch,
            loss,
            val_loss,
        });
        if config.patience.is_some_and(|p| stale >= p) {
            break;
        }
    }

    let best_epoch = match best {
        Some((_, e, params)) => {
            model.params = params;
            e
        }
        None => trace.len(),
    };
    let final_loss = eval(&model, &x_train, &y_train)?;
    if !final_loss.is_finite() {
        return Err(NeuralError::Diverged { epoch: trace.len() });
    }
    Ok(TrainedModel {
        model,
        tau,
        initial_loss,
        final_loss,
        best_epoch,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Architecture;

    fn linear_data(m: usize) -> (Tensor, Tensor) {
        // target = mean of the window's first feature, noiseless
        let mut x = Vec::with_capacity(m * 3 * 2);
        let mut y = Vec::with_capacity(m);
        for i in 0..m {
            let mut s = 0.0;
            for t in 0..3 {
                let v = ((i * 7 + t * 3) % 11) as f64 / 11.0 - 0.5;
                x.push(v);
                x.push(((i + t) % 5) as f64 / 5.0);
                s += v;
            }
            y.push(s / 3.0);
        }
        (
            Tensor::new(vec![m, 3, 2], x).unwrap(),
            Tensor::new(vec![m, 1], y).unwrap(),
        )
    }

    #[test]
    fn median_fit_on_noiseless_linear_data() {
        let (x, y) = linear_data(60);
        let spec = ModelSpec::new(Architecture::Mlp, 3, 2, 1).with_hidden(vec![]);
        let cfg = TrainConfig {
            epochs: 3000,
            adam: AdamConfig {
                learning_rate: 0.01,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let trained = train_quantile_model(&spec, &x, &y, 0.5, &cfg).unwrap();
        assert!(trained.final_loss <= trained.initial_loss);
        assert!(trained.final_loss < 5e-3, "loss {}", trained.final_loss);
        assert_eq!(trained.trace.len(), 3000);
    }

    #[test]
    fn seeded_training_is_reproducible() {
        let (x, y) = linear_data(40);
        let spec = ModelSpec::new(Architecture::Rnn, 3, 2, 1)
            .with_hidden(vec![4])
            .with_seed(5);
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: Some(8),
            seed: 17,
            ..TrainConfig::default()
        };
        let a = train_quantile_model(&spec, &x, &y, 0.9, &cfg).unwrap();
        let b = train_quantile_model(&spec, &x, &y, 0.9, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn early_stopping_restores_best() {
        let (x, y) = linear_data(50);
        let spec = ModelSpec::new(Architecture::Mlp, 3, 2, 1).with_hidden(vec![4]);
        let cfg = TrainConfig {
            epochs: 500,
            patience: Some(3),
            validation_fraction: 0.2,
            adam: AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let trained = train_quantile_model(&spec, &x, &y, 0.5, &cfg).unwrap();
        let best_val = trained
            .trace
            .iter()
            .filter_map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        let rec = &trained.trace[trained.best_epoch - 1];
        assert_eq!(rec.val_loss, Some(best_val));
    }

    #[test]
    fn divergence_reports_epoch() {
        let (x, mut y) = linear_data(10);
        y.data_mut()[3] = f64::NAN;
        let spec = ModelSpec::new(Architecture::Constant, 3, 2, 1);
        let err = train_quantile_model(&spec, &x, &y, 0.5, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, NeuralError::Diverged { epoch: 1 }), "{err:?}");
    }

    #[test]
    fn config_validation() {
        let (x, y) = linear_data(10);
        let spec = ModelSpec::new(Architecture::Constant, 3, 2, 1);
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(train_quantile_model(&spec, &x, &y, 0.5, &bad).is_err());
        assert!(train_quantile_model(&spec, &x, &y, 1.5, &TrainConfig::default()).is_err());
        let no_val = TrainConfig {
            patience: Some(2),
            ..TrainConfig::default()
        };
        assert!(no_val.validate().is_err());
    }

    #[test]
    fn trace_csv_format() {
        let (x, y) = linear_data(10);
        let spec = ModelSpec::new(Architecture::Constant, 3, 2, 1);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let t = train_quantile_model(&spec, &x, &y, 0.5, &cfg).unwrap();
        let mut buf = Vec::new();
        t.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "epoch,loss");
        assert!(lines[1].starts_with("1,"));
        assert_eq!(lines.len(), 3);
    }
}
