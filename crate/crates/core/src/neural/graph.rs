//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] is built fresh for every forward pass. Nodes are appended in
//! evaluation order, so a single reverse sweep over the node list visits each
//! node after all of its consumers.

use super::loss::{tilted_loss_grad_slice, tilted_loss_slice};
use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use super::NeuralError;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Columns { src: Var, start: usize },
    ConcatColumns(Vec<Var>),
    TimeStep { src: Var, t: usize },
    Reshape(Var),
    Conv1d { input: Var, weight: Var, bias: Var },
    MeanOverTime(Var),
    TiltedLoss { pred: Var, target: Tensor, tau: f64 },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<Var>,
}

fn mismatch(context: &'static str, a: &Tensor, b: &Tensor) -> NeuralError {
    NeuralError::ShapeMismatch {
        context,
        expected: a.shape().to_vec(),
        found: b.shape().to_vec(),
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    /// Registers every parameter tensor as a leaf, in order. Parameters that
    /// never reach the loss receive a zero gradient from [`Graph::backward`].
    pub fn with_params(params: &[Tensor]) -> (Graph, Vec<Var>) {
        let mut g = Graph::new();
        let vars = params
            .iter()
            .map(|p| g.push(p.clone(), Op::Param))
            .collect::<Vec<_>>();
        g.params = vars.clone();
        (g, vars)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant leaf (inputs, initial recurrent states).
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    /// `a (m×k) · b (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(mismatch("matmul", av, bv));
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let mut out = Tensor::zeros(&[m, n]);
        matmul_acc(av.data(), bv.data(), out.data_mut(), m, k, n);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    /// Adds a length-`n` bias to every trailing row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NeuralError> {
        let (av, bv) = (self.value(a), self.value(bias));
        let n = bv.len();
        if av.shape().last() != Some(&n) {
            return Err(mismatch("add_bias", av, bv));
        }
        let mut out = av.clone();
        for row in out.data_mut().chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(out, Op::AddBias(a, bias)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("add", av, bv));
        }
        let mut out = av.clone();
        out.add_assign(bv);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(mismatch("mul", av, bv));
        }
        let mut out = av.clone();
        for (o, y) in out.data_mut().iter_mut().zip(bv.data()) {
            *o *= y;
        }
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        self.push(out, Op::Sigmoid(a))
    }

    /// Columns `start..end` of a 2-D node.
    pub fn columns(&mut self, src: Var, start: usize, end: usize) -> Result<Var, NeuralError> {
        let sv = self.value(src);
        if sv.shape().len() != 2 || end > sv.shape()[1] || start >= end {
            return Err(NeuralError::ShapeMismatch {
                context: "columns",
                expected: vec![sv.rows(), end],
                found: sv.shape().to_vec(),
            });
        }
        let (m, n) = (sv.shape()[0], sv.shape()[1]);
        let w = end - start;
        let mut data = Vec::with_capacity(m * w);
        for i in 0..m {
            data.extend_from_slice(&sv.data()[i * n + start..i * n + end]);
        }
        let out = Tensor::new(vec![m, w], data)?;
        Ok(self.push(out, Op::Columns { src, start }))
    }

    /// Side-by-side concatenation of 2-D nodes sharing a row count.
    pub fn concat_columns(&mut self, parts: &[Var]) -> Result<Var, NeuralError> {
        let first = self.value(*parts.first().ok_or(NeuralError::EmptyData)?);
        let m = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let pv = self.value(p);
            if pv.shape().len() != 2 || pv.rows() != m {
                return Err(mismatch("concat_columns", first, pv));
            }
            widths.push(pv.shape()[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.value(p).data()[i * w..(i + 1) * w]);
            }
        }
        let out = Tensor::new(vec![m, total], data)?;
        Ok(self.push(out, Op::ConcatColumns(parts.to_vec())))
    }

    /// Slice `[.., t, ..]` of an `M×T×F` node, giving `M×F`.
    pub fn time_step(&mut self, src: Var, t: usize) -> Result<Var, NeuralError> {
        let sv = self.value(src);
        if sv.shape().len() != 3 || t >= sv.shape()[1] {
            return Err(NeuralError::ShapeMismatch {
                context: "time_step",
                expected: vec![sv.rows(), t + 1, 0],
                found: sv.shape().to_vec(),
            });
        }
        let (m, steps, f) = (sv.shape()[0], sv.shape()[1], sv.shape()[2]);
        let mut data = Vec::with_capacity(m * f);
        for i in 0..m {
            let off = (i * steps + t) * f;
            data.extend_from_slice(&sv.data()[off..off + f]);
        }
        let out = Tensor::new(vec![m, f], data)?;
        Ok(self.push(out, Op::TimeStep { src, t }))
    }

    pub fn reshape(&mut self, src: Var, shape: &[usize]) -> Result<Var, NeuralError> {
        let out = self.value(src).clone().reshape(shape)?;
        Ok(self.push(out, Op::Reshape(src)))
    }

    /// Valid 1-D convolution over the time axis.
    ///
    /// `input` is `M×L×Cin`, `weight` is `K×Cin×Cout`, `bias` is `Cout`; the
    /// result is `M×(L−K+1)×Cout`.
    pub fn conv1d(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var, NeuralError> {
        let (iv, wv, bv) = (self.value(input), self.value(weight), self.value(bias));
        let (is, ws) = (iv.shape(), wv.shape());
        if is.len() != 3 || ws.len() != 3 || is[2] != ws[1] || bv.len() != ws[2] || is[1] < ws[0] {
            return Err(mismatch("conv1d", iv, wv));
        }
        let (m, l, cin) = (is[0], is[1], is[2]);
        let (k, cout) = (ws[0], ws[2]);
        let lo = l - k + 1;
        let patch = k * cin;
        let mut out = Tensor::zeros(&[m, lo, cout]);
        let od = out.data_mut();
        for i in 0..m {
            for t in 0..lo {
                let row = &mut od[(i * lo + t) * cout..(i * lo + t + 1) * cout];
                row.copy_from_slice(bv.data());
                // the K consecutive time rows form one contiguous patch
                let start = (i * l + t) * cin;
                matmul_acc(
                    &iv.data()[start..start + patch],
                    wv.data(),
                    row,
                    1,
                    patch,
                    cout,
                );
            }
        }
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                weight,
                bias,
            },
        ))
    }

    /// Mean over the middle (time) axis of an `M×L×C` node.
    pub fn mean_over_time(&mut self, src: Var) -> Result<Var, NeuralError> {
        let sv = self.value(src);
        if sv.shape().len() != 3 {
            return Err(NeuralError::ShapeMismatch {
                context: "mean_over_time",
                expected: vec![0, 0, 0],
                found: sv.shape().to_vec(),
            });
        }
        let (m, l, c) = (sv.shape()[0], sv.shape()[1], sv.shape()[2]);
        let mut out = Tensor::zeros(&[m, c]);
        let scale = 1.0 / l as f64;
        for i in 0..m {
            for t in 0..l {
                let row = &sv.data()[(i * l + t) * c..(i * l + t + 1) * c];
                for (o, v) in out.data_mut()[i * c..(i + 1) * c].iter_mut().zip(row) {
                    *o += v * scale;
                }
            }
        }
        Ok(self.push(out, Op::MeanOverTime(src)))
    }

    /// Mean tilted loss between `pred` and a constant target.
    pub fn tilted_loss(
        &mut self,
        pred: Var,
        target: &Tensor,
        tau: f64,
    ) -> Result<Var, NeuralError> {
        let pv = self.value(pred);
        if pv.shape() != target.shape() {
            return Err(mismatch("tilted_loss", pv, target));
        }
        let loss = tilted_loss_slice(pv.data(), target.data(), tau);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::TiltedLoss {
                pred,
                target: target.clone(),
                tau,
            },
        ))
    }

    /// Reverse sweep from a scalar node. Returns one gradient per registered
    /// parameter, in registration order.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor>, NeuralError> {
        if self.params.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NeuralError::BackwardBeforeForward);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NeuralError::NonScalarLoss(
                self.nodes[loss.0].value.shape().to_vec(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Param => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                    let ga = accum(&mut grads, self, *a);
                    matmul_bt_acc(g.data(), bv.data(), ga.data_mut(), m, n, k);
                    let gb = accum(&mut grads, self, *b);
                    matmul_at_acc(av.data(), g.data(), gb.data_mut(), m, k, n);
                }
                Op::AddBias(a, b) => {
                    let n = self.value(*b).len();
                    accum(&mut grads, self, *a).add_assign(&g);
                    let gb = accum(&mut grads, self, *b);
                    for row in g.data().chunks(n) {
                        for (acc, v) in gb.data_mut().iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    accum(&mut grads, self, *a).add_assign(&g);
                    accum(&mut grads, self, *b).add_assign(&g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let ga = accum(&mut grads, self, *a);
                    for ((acc, gi), y) in ga.data_mut().iter_mut().zip(g.data()).zip(bv.data()) {
                        *acc += gi * y;
                    }
                    let gb = accum(&mut grads, self, *b);
                    for ((acc, gi), x) in gb.data_mut().iter_mut().zip(g.data()).zip(av.data()) {
                        *acc += gi * x;
                    }
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = accum(&mut grads, self, *a);
                    for ((acc, gi), yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *acc += gi * (1.0 - yi * yi);
                    }
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    let ga = accum(&mut grads, self, *a);
                    for ((acc, gi), yi) in ga.data_mut().iter_mut().zip(g.data()).zip(y.data()) {
                        *acc += gi * yi * (1.0 - yi);
                    }
                }
                Op::Columns { src, start } => {
                    let n = self.value(*src).shape()[1];
                    let w = node.value.shape()[1];
                    let gs = accum(&mut grads, self, *src);
                    for (i, row) in g.data().chunks(w).enumerate() {
                        let dst = &mut gs.data_mut()[i * n + start..i * n + start + w];
                        for (acc, v) in dst.iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
                Op::ConcatColumns(parts) => {
                    let total = node.value.shape()[1];
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).shape()[1];
                        let gp = accum(&mut grads, self, p);
                        for (i, row) in g.data().chunks(total).enumerate() {
                            for (acc, v) in gp.data_mut()[i * w..(i + 1) * w]
                                .iter_mut()
                                .zip(&row[offset..offset + w])
                            {
                                *acc += v;
                            }
                        }
                        offset += w;
                    }
                }
                Op::TimeStep { src, t } => {
                    let s = self.value(*src).shape().to_vec();
                    let (steps, f) = (s[1], s[2]);
                    let gs = accum(&mut grads, self, *src);
                    for (i, row) in g.data().chunks(f).enumerate() {
                        let off = (i * steps + t) * f;
                        for (acc, v) in gs.data_mut()[off..off + f].iter_mut().zip(row) {
                            *acc += v;
                        }
                    }
                }
                Op::Reshape(src) => {
                    let gs = accum(&mut grads, self, *src);
                    for (acc, v) in gs.data_mut().iter_mut().zip(g.data()) {
                        *acc += v;
                    }
                }
                Op::Conv1d {
                    input,
                    weight,
                    bias,
                } => {
                    let (iv, wv) = (self.value(*input), self.value(*weight));
                    let (m, l, cin) = (iv.shape()[0], iv.shape()[1], iv.shape()[2]);
                    let (k, cout) = (wv.shape()[0], wv.shape()[2]);
                    let lo = l - k + 1;
                    let patch = k * cin;
                    {
                        let gb = accum(&mut grads, self, *bias);
                        for row in g.data().chunks(cout) {
                            for (acc, v) in gb.data_mut().iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                    }
                    {
                        let gw = accum(&mut grads, self, *weight);
                        for i in 0..m {
                            for t in 0..lo {
                                let start = (i * l + t) * cin;
                                let grow = &g.data()[(i * lo + t) * cout..(i * lo + t + 1) * cout];
                                matmul_at_acc(
                                    &iv.data()[start..start + patch],
                                    grow,
                                    gw.data_mut(),
                                    1,
                                    patch,
                                    cout,
                                );
                            }
                        }
                    }
                    let gi = accum(&mut grads, self, *input);
                    for i in 0..m {
                        for t in 0..lo {
                            let start = (i * l + t) * cin;
                            let grow = &g.data()[(i * lo + t) * cout..(i * lo + t + 1) * cout];
                            matmul_bt_acc(
                                grow,
                                wv.data(),
                                &mut gi.data_mut()[start..start + patch],
                                1,
                                cout,
                                patch,
                            );
                        }
                    }
                }
                Op::MeanOverTime(src) => {
                    let s = self.value(*src).shape().to_vec();
                    let (l, c) = (s[1], s[2]);
                    let scale = 1.0 / l as f64;
                    let gs = accum(&mut grads, self, *src);
                    for (i, row) in g.data().chunks(c).enumerate() {
                        for t in 0..l {
                            let dst = &mut gs.data_mut()[(i * l + t) * c..(i * l + t + 1) * c];
                            for (acc, v) in dst.iter_mut().zip(row) {
                                *acc += v * scale;
                            }
                        }
                    }
                }
                Op::TiltedLoss { pred, target, tau } => {
                    let seed = g.data()[0];
                    let pv = self.value(*pred);
                    let gp = accum(&mut grads, self, *pred);
                    tilted_loss_grad_slice(pv.data(), target.data(), *tau, seed, gp.data_mut());
                }
            }
        }

        Ok(self
            .params
            .iter()
            .map(|p| {
                grads[p.0]
                    .take()
                    .unwrap_or_else(|| Tensor::zeros(self.value(*p).shape()))
            })
            .collect())
    }
}

fn accum<'a>(grads: &'a mut [Option<Tensor>], graph: &Graph, v: Var) -> &'a mut Tensor {
    grads[v.0].get_or_insert_with(|| Tensor::zeros(graph.value(v).shape()))
}
