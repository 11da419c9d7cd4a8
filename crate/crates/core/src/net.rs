//! A small dense network with two output branches.
//!
//! ```text
//! X ──DNN (ReLU stack)──▶ X̃ ──buffer (FC + ReLU)──▶ X̂ ──linear head──▶ Ỹ
//!                                                   └──▶ WNLL interpolation
//! ```
//!
//! A layer spec `[input, h1, ..., buffer, classes]` lists the widths; every
//! width between the input and the buffer is a DNN layer.

use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::{affine_rows, log_sum_exp};
use crate::rng::Streams;

/// Fully connected layer, `weight` is row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weight: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weight.iter().chain(&self.bias)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weight.iter_mut().chain(&mut self.bias)
    }

    fn forward(&self, input: &[f64], rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; rows * self.outputs];
        affine_rows(input, rows, &self.weight, &self.bias, &mut out);
        out
    }

    /// Gradient of this layer from the upstream gradient `d_out`, and the
    /// gradient with respect to `input` when requested.
    fn backward(&self, input: &[f64], d_out: &[f64], rows: usize, want_input: bool) -> (Dense, Option<Vec<f64>>) {
        let mut grad = Dense::zeros(self.inputs, self.outputs);
        for r in 0..rows {
            let x = &input[r * self.inputs..(r + 1) * self.inputs];
            let g = &d_out[r * self.outputs..(r + 1) * self.outputs];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                grad.bias[o] += go;
                let w = &mut grad.weight[o * self.inputs..(o + 1) * self.inputs];
                for (wi, &xi) in w.iter_mut().zip(x) {
                    *wi += go * xi;
                }
            }
        }
        let d_input = want_input.then(|| {
            let mut d_in = vec![0.0; rows * self.inputs];
            for r in 0..rows {
                let g = &d_out[r * self.outputs..(r + 1) * self.outputs];
                let di = &mut d_in[r * self.inputs..(r + 1) * self.inputs];
                for (o, &go) in g.iter().enumerate() {
                    if go == 0.0 {
                        continue;
                    }
                    for (d, &w) in di.iter_mut().zip(&self.weight[o * self.inputs..(o + 1) * self.inputs]) {
                        *d += go * w;
                    }
                }
            }
            d_in
        });
        (grad, d_input)
    }
}

/// DNN block `Θ`, buffer `W_B` and linear head `W_L`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub dnn: Vec<Dense>,
    pub buffer: Dense,
    pub head: Dense,
}

impl NetworkParams {
    pub fn zeros(spec: &[usize]) -> Result<Self> {
        validate_spec(spec)?;
        let n = spec.len();
        let dnn = spec[..n - 2].windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Ok(Self { dnn, buffer: Dense::zeros(spec[n - 3], spec[n - 2]), head: Dense::zeros(spec[n - 2], spec[n - 1]) })
    }

    pub fn layer_spec(&self) -> Vec<usize> {
        let mut spec = vec![self.input_dim()];
        spec.extend(self.dnn.iter().map(|l| l.outputs));
        spec.push(self.buffer.outputs);
        spec.push(self.head.outputs);
        spec
    }

    pub fn input_dim(&self) -> usize {
        self.dnn.first().map_or(self.buffer.inputs, |l| l.inputs)
    }

    pub fn classes(&self) -> usize {
        self.head.outputs
    }

    pub fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.dnn.iter().chain([&self.buffer, &self.head])
    }

    pub fn param_count(&self) -> usize {
        self.layers().map(Dense::param_count).sum()
    }

    /// All parameters in layer order, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers().flat_map(Dense::params).copied().collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch { what: "flat parameter count", expected: self.param_count(), found: flat.len() });
        }
        let mut it = flat.iter();
        for layer in self.dnn.iter_mut().chain([&mut self.buffer, &mut self.head]) {
            for (p, &v) in layer.params_mut().zip(&mut it) {
                *p = v;
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers().flat_map(Dense::params).all(|v| v.is_finite())
    }
}

fn validate_spec(spec: &[usize]) -> Result<()> {
    if spec.len() < 3 {
        return Err(Error::InvalidParameter {
            name: "layer_spec",
            reason: "need at least input, buffer and output widths",
        });
    }
    if spec.contains(&0) {
        return Err(Error::InvalidParameter { name: "layer_spec", reason: "widths must be positive" });
    }
    Ok(())
}

/// He-normal weights (`N(0, 2 / fan_in)`) and zero biases.
pub fn init_network(spec: &[usize], seed: u64) -> Result<NetworkParams> {
    let mut params = NetworkParams::zeros(spec)?;
    let mut rng = Streams::new(seed).stream("init");
    for layer in params.dnn.iter_mut().chain([&mut params.buffer, &mut params.head]) {
        let normal = Normal::new(0.0, libm::sqrt(2.0 / layer.inputs as f64)).expect("positive std");
        for w in &mut layer.weight {
            *w = normal.sample(&mut rng);
        }
    }
    Ok(params)
}

/// Activations kept for backpropagation, all row-major with `rows` rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub rows: usize,
    pub input: Vec<f64>,
    /// Pre-activation of each DNN layer.
    pub dnn_pre: Vec<Vec<f64>>,
    /// ReLU output of each DNN layer; the last one is `X̃`.
    pub dnn_post: Vec<Vec<f64>>,
    pub buffer_pre: Vec<f64>,
    /// `X̂`.
    pub buffer_out: Vec<f64>,
    /// `Ỹ`.
    pub logits: Vec<f64>,
}

impl ForwardTrace {
    /// `X̃`, the DNN block output.
    pub fn features(&self) -> &[f64] {
        self.dnn_post.last().unwrap_or(&self.input)
    }
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect()
}

pub fn forward(params: &NetworkParams, batch: &DataMatrix) -> Result<ForwardTrace> {
    if batch.cols() != params.input_dim() {
        return Err(Error::ShapeMismatch { what: "batch width", expected: params.input_dim(), found: batch.cols() });
    }
    let rows = batch.rows();
    let mut dnn_pre = Vec::with_capacity(params.dnn.len());
    let mut dnn_post: Vec<Vec<f64>> = Vec::with_capacity(params.dnn.len());
    for layer in &params.dnn {
        let input = dnn_post.last().map_or(batch.values(), |v| v.as_slice());
        let pre = layer.forward(input, rows);
        dnn_post.push(relu(&pre));
        dnn_pre.push(pre);
    }
    let features = dnn_post.last().map_or(batch.values(), |v| v.as_slice());
    let buffer_pre = params.buffer.forward(features, rows);
    let buffer_out = relu(&buffer_pre);
    let logits = params.head.forward(&buffer_out, rows);
    Ok(ForwardTrace { rows, input: batch.values().to_vec(), dnn_pre, dnn_post, buffer_pre, buffer_out, logits })
}

/// Buffer-block output `X̂` for every row, the space WNLL interpolates in.
pub fn embed(params: &NetworkParams, data: &DataMatrix) -> Result<DataMatrix> {
    let trace = forward(params, data)?;
    DataMatrix::new(trace.rows, params.buffer.outputs, trace.buffer_out)
}

/// Mean softmax cross-entropy of row-major logits.
pub fn cross_entropy(logits: &[f64], classes: usize, labels: &[usize]) -> f64 {
    let rows = labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| {
            let z = &logits[r * classes..(r + 1) * classes];
            log_sum_exp(z) - z[y]
        })
        .sum();
    total / rows as f64
}

/// Mean negative log-likelihood of probability rows, each probability
/// clamped to `[floor, 1]` first.
pub fn cross_entropy_probs(probs: &[f64], classes: usize, labels: &[usize], floor: f64) -> f64 {
    let rows = labels.len();
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(r, &y)| -libm::log(probs[r * classes + y].clamp(floor, 1.0)))
        .sum();
    total / rows as f64
}

/// `(softmax(Ỹ) - onehot(y)) / rows`, the gradient of the mean loss.
fn logit_gradient(logits: &[f64], classes: usize, labels: &[usize]) -> Vec<f64> {
    let rows = labels.len();
    let mut grad = vec![0.0; logits.len()];
    for (r, &y) in labels.iter().enumerate() {
        let z = &logits[r * classes..(r + 1) * classes];
        let lse = log_sum_exp(z);
        let g = &mut grad[r * classes..(r + 1) * classes];
        for (gc, &zc) in g.iter_mut().zip(z) {
            *gc = libm::exp(zc - lse) / rows as f64;
        }
        g[y] -= 1.0 / rows as f64;
    }
    grad
}

/// Gradients of the linear-branch loss.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub params: NetworkParams,
    /// `∂L/∂X̂`, row-major like the buffer output.
    pub d_buffer_out: Vec<f64>,
    pub loss: f64,
}

pub fn backward(params: &NetworkParams, trace: &ForwardTrace, labels: &[usize]) -> Result<Gradients> {
    if labels.len() != trace.rows {
        return Err(Error::ShapeMismatch { what: "label count", expected: trace.rows, found: labels.len() });
    }
    let classes = params.classes();
    if let Some(&y) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { index: 0, label: y, classes });
    }
    let rows = trace.rows;
    let loss = cross_entropy(&trace.logits, classes, labels);
    let d_logits = logit_gradient(&trace.logits, classes, labels);
    let (head, d_buffer_out) = params.head.backward(&trace.buffer_out, &d_logits, rows, true);
    let d_buffer_out = d_buffer_out.expect("requested");
    let (buffer, d_features) = buffer_backward(params, trace, &d_buffer_out, !params.dnn.is_empty());

    let mut dnn: Vec<Dense> = Vec::with_capacity(params.dnn.len());
    let mut upstream = d_features;
    for l in (0..params.dnn.len()).rev() {
        let mut d_pre = upstream.take().expect("requested for every DNN layer");
        mask_relu(&mut d_pre, &trace.dnn_pre[l]);
        let input = if l == 0 { &trace.input } else { &trace.dnn_post[l - 1] };
        let (grad, d_in) = params.dnn[l].backward(input, &d_pre, rows, l > 0);
        dnn.push(grad);
        upstream = d_in;
    }
    dnn.reverse();
    Ok(Gradients { params: NetworkParams { dnn, buffer, head }, d_buffer_out, loss })
}

fn mask_relu(grad: &mut [f64], pre: &[f64]) {
    for (g, &z) in grad.iter_mut().zip(pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
}

fn buffer_backward(
    params: &NetworkParams,
    trace: &ForwardTrace,
    d_buffer_out: &[f64],
    want_features: bool,
) -> (Dense, Option<Vec<f64>>) {
    let mut d_pre = d_buffer_out.to_vec();
    mask_relu(&mut d_pre, &trace.buffer_pre);
    params.buffer.backward(trace.features(), &d_pre, trace.rows, want_features)
}

/// `W_B` gradient for an arbitrary upstream `∂L/∂X̂` (`∂L/∂X̂ · ∂X̂/∂W_B`).
pub fn buffer_gradient(params: &NetworkParams, trace: &ForwardTrace, d_buffer_out: &[f64]) -> Dense {
    buffer_backward(params, trace, d_buffer_out, false).0
}

/// Which parameter blocks an update may touch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockMask {
    pub dnn: bool,
    pub buffer: bool,
    pub head: bool,
}

impl BlockMask {
    pub const ALL: Self = Self { dnn: true, buffer: true, head: true };
    pub const BUFFER: Self = Self { dnn: false, buffer: true, head: false };
}

/// SGD with Nesterov momentum and L2 weight decay folded into the gradient.
///
/// Gradients are taken at the look-ahead point `p + μv` returned by
/// [`Sgd::lookahead`]; [`Sgd::step`] then applies
/// `v ← μv - γ(g + λp)`, `p ← p + v`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: NetworkParams,
}

impl Sgd {
    pub fn new(params: &NetworkParams, momentum: f64, weight_decay: f64) -> Self {
        let velocity = NetworkParams::zeros(&params.layer_spec()).expect("spec of a valid network");
        Self { momentum, weight_decay, velocity }
    }

    pub fn lookahead(&self, params: &NetworkParams, mask: BlockMask) -> NetworkParams {
        if self.momentum == 0.0 {
            return params.clone();
        }
        let mut ahead = params.clone();
        for_masked(&mut ahead, &self.velocity, mask, |p, v| {
            for (pi, &vi) in p.iter_mut().zip(v) {
                *pi += self.momentum * vi;
            }
        });
        ahead
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams, lr: f64, mask: BlockMask) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        let update = |p: &mut Dense, v: &mut Dense, g: &Dense| {
            for ((pi, vi), &gi) in p.params_mut().zip(v.params_mut()).zip(g.params()) {
                *vi = mu * *vi - lr * (gi + wd * *pi);
                *pi += *vi;
            }
        };
        if mask.dnn {
            for ((p, v), g) in params.dnn.iter_mut().zip(&mut self.velocity.dnn).zip(&grads.dnn) {
                update(p, v, g);
            }
        }
        if mask.buffer {
            update(&mut params.buffer, &mut self.velocity.buffer, &grads.buffer);
        }
        if mask.head {
            update(&mut params.head, &mut self.velocity.head, &grads.head);
        }
    }
}

fn for_masked(params: &mut NetworkParams, other: &NetworkParams, mask: BlockMask, mut f: impl FnMut(&mut [f64], &[f64])) {
    let mut apply = |p: &mut Dense, o: &Dense| {
        f(&mut p.weight, &o.weight);
        f(&mut p.bias, &o.bias);
    };
    if mask.dnn {
        for (p, o) in params.dnn.iter_mut().zip(&other.dnn) {
            apply(p, o);
        }
    }
    if mask.buffer {
        apply(&mut params.buffer, &other.buffer);
    }
    if mask.head {
        apply(&mut params.head, &other.head);
    }
}

/// Denominator floor of the relative error, so that gradients near zero are
/// compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Worst `|analytic - numeric| / max(|numeric|, floor)` over all parameters,
/// with central differences of step `eps`.
pub fn grad_check(params: &NetworkParams, batch: &DataMatrix, labels: &[usize], eps: f64) -> Result<f64> {
    let trace = forward(params, batch)?;
    let analytic = backward(params, &trace, labels)?.params;
    grad_check_against(params, batch, labels, eps, &analytic)
}

/// [`grad_check`] against a supplied gradient.
pub fn grad_check_against(
    params: &NetworkParams,
    batch: &DataMatrix,
    labels: &[usize],
    eps: f64,
    analytic: &NetworkParams,
) -> Result<f64> {
    let base = params.to_flat();
    let grad = analytic.to_flat();
    let classes = params.classes();
    let mut probe = params.clone();
    let mut loss_at = |flat: &[f64]| -> Result<f64> {
        probe.set_flat(flat)?;
        Ok(cross_entropy(&forward(&probe, batch)?.logits, classes, labels))
    };
    let mut worst: f64 = 0.0;
    let mut shifted = base.clone();
    for i in 0..base.len() {
        shifted[i] = base[i] + eps;
        let up = loss_at(&shifted)?;
        shifted[i] = base[i] - eps;
        let down = loss_at(&shifted)?;
        shifted[i] = base[i];
        let numeric = (up - down) / (2.0 * eps);
        let err = libm::fabs(grad[i] - numeric) / libm::fabs(numeric).max(GRAD_CHECK_FLOOR);
        worst = worst.max(err);
    }
    Ok(worst)
}
