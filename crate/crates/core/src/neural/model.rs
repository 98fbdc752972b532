use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Graph, NeuralError, Tensor, Var};

/// Rows per forward pass at inference time; bounds tape memory.
const INFERENCE_CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// flatten → tanh layers → linear head
    Mlp,
    /// single tanh recurrent layer → linear head on the last state
    Rnn,
    /// two valid convolutions over time with tanh → global mean pool → linear head
    Cnn1d,
    /// LSTM encoder over the input window, LSTM decoder unrolled over the horizon
    LstmEncdec,
    /// input-independent bias per lead time; used as a diagnostic baseline
    Constant,
}

impl Architecture {
    pub fn default_hidden(self) -> Vec<usize> {
        match self {
            Architecture::Mlp => vec![64, 32],
            Architecture::Rnn => vec![32],
            Architecture::Cnn1d => vec![16, 32],
            Architecture::LstmEncdec => vec![32],
            Architecture::Constant => vec![],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Mlp => "mlp",
            Architecture::Rnn => "rnn",
            Architecture::Cnn1d => "cnn1d",
            Architecture::LstmEncdec => "lstm_encdec",
            Architecture::Constant => "constant",
        }
    }
}

impl std::str::FromStr for Architecture {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mlp" => Ok(Architecture::Mlp),
            "rnn" => Ok(Architecture::Rnn),
            "cnn1d" => Ok(Architecture::Cnn1d),
            "lstm_encdec" => Ok(Architecture::LstmEncdec),
            "constant" => Ok(Architecture::Constant),
            other => Err(NeuralError::InvalidSpec(format!(
                "unknown architecture `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Hidden widths (MLP layers, recurrent width, or conv channels).
    pub hidden: Vec<usize>,
    pub kernel_size: usize,
    /// Input window length α.
    pub window: usize,
    pub input_width: usize,
    /// Output horizon H.
    pub horizon: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(
        architecture: Architecture,
        window: usize,
        input_width: usize,
        horizon: usize,
    ) -> Self {
        ModelSpec {
            architecture,
            hidden: architecture.default_hidden(),
            kernel_size: 3,
            window,
            input_width,
            horizon,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |msg: String| Err(NeuralError::InvalidSpec(msg));
        if self.window == 0 || self.input_width == 0 || self.horizon == 0 {
            return bad("window, input width and horizon must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        let need = match self.architecture {
            Architecture::Mlp => None,
            Architecture::Rnn | Architecture::LstmEncdec => Some(1),
            Architecture::Cnn1d => Some(2),
            Architecture::Constant => Some(0),
        };
        if let Some(n) = need {
            if self.hidden.len() != n {
                return bad(format!(
                    "{} expects {n} hidden sizes, got {}",
                    self.architecture.name(),
                    self.hidden.len()
                ));
            }
        }
        if self.architecture == Architecture::Cnn1d {
            if self.kernel_size == 0 {
                return bad("kernel size must be positive".into());
            }
            if self.window < 2 * (self.kernel_size - 1) + 1 {
                return bad(format!(
                    "window {} too short for two convolutions of kernel {}",
                    self.window, self.kernel_size
                ));
            }
        }
        Ok(())
    }

    /// Shapes of every parameter tensor, in storage order. Weight matrices are
    /// `fan_in × fan_out`; biases follow their weights.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let (f, h) = (self.input_width, self.horizon);
        match self.architecture {
            Architecture::Mlp => {
                let mut dims = vec![self.window * f];
                dims.extend(&self.hidden);
                dims.push(h);
                dims.windows(2)
                    .flat_map(|w| [vec![w[0], w[1]], vec![w[1]]])
                    .collect()
            }
            Architecture::Rnn => {
                let hd = self.hidden[0];
                vec![vec![f, hd], vec![hd, hd], vec![hd], vec![hd, h], vec![h]]
            }
            Architecture::Cnn1d => {
                let (c1, c2, k) = (self.hidden[0], self.hidden[1], self.kernel_size);
                vec![
                    vec![k, f, c1],
                    vec![c1],
                    vec![k, c1, c2],
                    vec![c2],
                    vec![c2, h],
                    vec![h],
                ]
            }
            Architecture::LstmEncdec => {
                let hd = self.hidden[0];
                vec![
                    vec![f, 4 * hd],
                    vec![hd, 4 * hd],
                    vec![4 * hd],
                    vec![hd, 4 * hd],
                    vec![hd, 4 * hd],
                    vec![4 * hd],
                    vec![hd, 1],
                    vec![1],
                ]
            }
            Architecture::Constant => vec![vec![h]],
        }
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// A model is its spec plus the flat list of parameter tensors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<Tensor>,
}

impl Model {
    /// Uniform fan-in initialization seeded from `spec.seed`; biases start at zero.
    pub fn new(spec: ModelSpec) -> Result<Model, NeuralError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let params = spec
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 1 {
                    return Tensor::zeros(&shape);
                }
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let bound = 1.0 / (fan_in as f64).sqrt();
                let mut t = Tensor::zeros(&shape);
                t.data_mut()
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..bound));
                t
            })
            .collect();
        Ok(Model { spec, params })
    }

    pub fn zeros(spec: ModelSpec) -> Result<Model, NeuralError> {
        spec.validate()?;
        let params = spec
            .param_shapes()
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect();
        Ok(Model { spec, params })
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn check_input(&self, inputs: &Tensor) -> Result<(), NeuralError> {
        let s = inputs.shape();
        if s.len() != 3 || s[1] != self.spec.window || s[2] != self.spec.input_width {
            return Err(NeuralError::ShapeMismatch {
                context: "model input",
                expected: vec![
                    s.first().copied().unwrap_or(0),
                    self.spec.window,
                    self.spec.input_width,
                ],
                found: s.to_vec(),
            });
        }
        Ok(())
    }

    /// Records the forward pass on `g`; `p` are this model's parameter vars.
    pub fn forward(&self, g: &mut Graph, p: &[Var], inputs: Var) -> Result<Var, NeuralError> {
        let m = g.value(inputs).rows();
        let spec = &self.spec;
        match spec.architecture {
            Architecture::Mlp => {
                let mut x = g.reshape(inputs, &[m, spec.window * spec.input_width])?;
                let layers = p.len() / 2;
                for l in 0..layers {
                    let z = g.matmul(x, p[2 * l])?;
                    let z = g.add_bias(z, p[2 * l + 1])?;
                    x = if l + 1 < layers { g.tanh(z) } else { z };
                }
                Ok(x)
            }
            Architecture::Rnn => {
                let hd = spec.hidden[0];
                let mut h = g.input(Tensor::zeros(&[m, hd]));
                for t in 0..spec.window {
                    let xt = g.time_step(inputs, t)?;
                    let a = g.matmul(xt, p[0])?;
                    let b = g.matmul(h, p[1])?;
                    let z = g.add(a, b)?;
                    let z = g.add_bias(z, p[2])?;
                    h = g.tanh(z);
                }
                let out = g.matmul(h, p[3])?;
                g.add_bias(out, p[4])
            }
            Architecture::Cnn1d => {
                let c1 = g.conv1d(inputs, p[0], p[1])?;
                let c1 = g.tanh(c1);
                let c2 = g.conv1d(c1, p[2], p[3])?;
                let c2 = g.tanh(c2);
                let pooled = g.mean_over_time(c2)?;
                let out = g.matmul(pooled, p[4])?;
                g.add_bias(out, p[5])
            }
            Architecture::LstmEncdec => {
                let hd = spec.hidden[0];
                let mut h = g.input(Tensor::zeros(&[m, hd]));
                let mut c = g.input(Tensor::zeros(&[m, hd]));
                for t in 0..spec.window {
                    let xt = g.time_step(inputs, t)?;
                    (h, c) = lstm_cell(g, xt, h, c, [p[0], p[1], p[2]], hd)?;
                }
                // the decoder sees the final encoder state as its input at every lead
                let context = h;
                let mut outs = Vec::with_capacity(spec.horizon);
                for _ in 0..spec.horizon {
                    (h, c) = lstm_cell(g, context, h, c, [p[3], p[4], p[5]], hd)?;
                    let y = g.matmul(h, p[6])?;
                    outs.push(g.add_bias(y, p[7])?);
                }
                g.concat_columns(&outs)
            }
            Architecture::Constant => {
                let zero = g.input(Tensor::zeros(&[m, spec.horizon]));
                g.add_bias(zero, p[0])
            }
        }
    }

    /// Predictions for `M×α×F` inputs, shape `M×H`.
    pub fn predict(&self, inputs: &Tensor) -> Result<Tensor, NeuralError> {
        self.check_input(inputs)?;
        let m = inputs.rows();
        let mut parts = Vec::with_capacity(m.div_ceil(INFERENCE_CHUNK));
        let mut start = 0;
        while start < m {
            let end = (start + INFERENCE_CHUNK).min(m);
            let (mut g, p) = Graph::with_params(&self.params);
            let x = g.input(inputs.slice_rows(start, end));
            let y = self.forward(&mut g, &p, x)?;
            parts.push(g.value(y).clone());
            start = end;
        }
        if parts.is_empty() {
            return Ok(Tensor::zeros(&[0, self.spec.horizon]));
        }
        Tensor::concat_rows(&parts)
    }

    /// Mean tilted loss and its gradient for every parameter tensor.
    pub fn loss_and_grads(
        &self,
        inputs: &Tensor,
        targets: &Tensor,
        tau: f64,
    ) -> Result<(f64, Vec<Tensor>), NeuralError> {
        self.check_input(inputs)?;
        let (mut g, p) = Graph::with_params(&self.params);
        let x = g.input(inputs.clone());
        let y = self.forward(&mut g, &p, x)?;
        let loss = g.tilted_loss(y, targets, tau)?;
        let value = g.value(loss).data()[0];
        Ok((value, g.backward(loss)?))
    }
}

/// One LSTM step with fused gate weights laid out `[input | forget | cell | output]`.
fn lstm_cell(
    g: &mut Graph,
    x: Var,
    h: Var,
    c: Var,
    [wx, wh, b]: [Var; 3],
    hd: usize,
) -> Result<(Var, Var), NeuralError> {
    let a = g.matmul(x, wx)?;
    let r = g.matmul(h, wh)?;
    let z = g.add(a, r)?;
    let z = g.add_bias(z, b)?;
    let i = g.columns(z, 0, hd)?;
    let i = g.sigmoid(i);
    let f = g.columns(z, hd, 2 * hd)?;
    let f = g.sigmoid(f);
    let cand = g.columns(z, 2 * hd, 3 * hd)?;
    let cand = g.tanh(cand);
    let o = g.columns(z, 3 * hd, 4 * hd)?;
    let o = g.sigmoid(o);
    let keep = g.mul(f, c)?;
    let write = g.mul(i, cand)?;
    let c_new = g.add(keep, write)?;
    let squashed = g.tanh(c_new);
    let h_new = g.mul(o, squashed)?;
    Ok((h_new, c_new))
}
