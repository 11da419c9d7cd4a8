//! Alternating training of the network with a linear head and with WNLL
//! interpolation as output activation, and WNLL-based testing.
//!
//! Each pass runs a linear stage that updates every block with the softmax
//! head, reserves a fresh stratified template, then runs a WNLL stage that
//! updates the buffer block only. WNLL has no usable gradient of its own, so
//! the buffer gradient comes from the linear branch on the same batch,
//! optionally scaled by `L^WNLL / max(L^Linear, ε)`.

use alloc::vec;
use alloc::vec::Vec;

use crate::classifier::{accuracy, batched_vote, wnll_classify, WnllParams};
use crate::data::{shuffled_batches, split_template, DataMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::knn::{build_graph, GraphParams};
use crate::linalg::argmax;
use crate::net::{
    backward, buffer_gradient, cross_entropy_probs, embed, forward, BlockMask, NetworkParams, Sgd,
};
use crate::rng::Streams;
use crate::solver::{wnll_interpolate, InterpolationProblem};

/// Probability floor applied before the log in `L^WNLL`.
pub const WNLL_PROB_FLOOR: f64 = 1e-12;
/// Denominator floor of the proxy ratio.
pub const PROXY_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub passes: usize,
    pub linear_epochs: usize,
    pub wnll_epochs: usize,
    /// First-pass learning rate of the linear stage.
    pub lr: f64,
    /// The linear-stage rate halves every this many epochs.
    pub lr_half_every: usize,
    /// First-pass learning rate of the WNLL stage.
    pub wnll_lr: f64,
    /// Rate multiplier for every pass after the first.
    pub later_pass_scale: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_linear: usize,
    pub batch_wnll: usize,
    pub graph: GraphParams,
    pub seed: u64,
    pub template_fraction: f64,
    /// Scale the proxy gradient by the loss ratio; off uses the linear-branch
    /// gradient as is.
    pub proxy_scaling: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            passes: 2,
            linear_epochs: 40,
            wnll_epochs: 5,
            lr: 0.05,
            lr_half_every: 5,
            wnll_lr: 0.0005,
            later_pass_scale: 0.2,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_linear: 32,
            batch_wnll: 250,
            graph: GraphParams::default(),
            seed: 0,
            template_fraction: 0.5,
            proxy_scaling: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason: "must be positive" })
            }
        };
        if self.passes == 0 {
            return Err(Error::InvalidParameter { name: "passes", reason: "must be at least 1" });
        }
        if self.lr_half_every == 0 {
            return Err(Error::InvalidParameter { name: "lr_half_every", reason: "must be at least 1" });
        }
        if self.batch_linear == 0 {
            return Err(Error::InvalidParameter { name: "batch_linear", reason: "must be at least 1" });
        }
        if self.batch_wnll < classes {
            return Err(Error::InvalidParameter { name: "batch_wnll", reason: "must be at least the class count" });
        }
        positive("lr", self.lr)?;
        positive("wnll_lr", self.wnll_lr)?;
        positive("later_pass_scale", self.later_pass_scale)?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter { name: "momentum", reason: "must lie in [0, 1)" });
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::InvalidParameter { name: "weight_decay", reason: "must be non-negative" });
        }
        if !(self.template_fraction > 0.0 && self.template_fraction < 1.0) {
            return Err(Error::InvalidParameter { name: "template_fraction", reason: "must lie strictly between 0 and 1" });
        }
        Ok(())
    }

    fn pass_scale(&self, pass: usize) -> f64 {
        if pass == 0 {
            1.0
        } else {
            self.later_pass_scale
        }
    }

    /// Linear-stage rate for a zero-based pass and epoch.
    pub fn linear_lr(&self, pass: usize, epoch: usize) -> f64 {
        let halvings = (epoch / self.lr_half_every).min(1074) as i32;
        self.lr * self.pass_scale(pass) * libm::pow(0.5, halvings as f64)
    }

    pub fn wnll_stage_lr(&self, pass: usize) -> f64 {
        self.wnll_lr * self.pass_scale(pass)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Linear,
    Wnll,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Linear => "linear",
            Stage::Wnll => "wnll",
        }
    }
}

/// Per-epoch record of one stage. Accuracy vectors are empty when no
/// evaluation set was supplied.
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: Stage,
    /// Zero-based.
    pub pass: usize,
    pub epochs: usize,
    /// Mean batch loss per epoch: `L^Linear` or `L^WNLL`.
    pub losses: Vec<f64>,
    pub lr: Vec<f64>,
    pub linear_accuracy: Vec<f64>,
    pub wnll_accuracy: Vec<f64>,
    pub steps: usize,
    pub skipped_batches: usize,
}

impl StageReport {
    fn new(stage: Stage, pass: usize) -> Self {
        Self {
            stage,
            pass,
            epochs: 0,
            losses: Vec::new(),
            lr: Vec::new(),
            linear_accuracy: Vec::new(),
            wnll_accuracy: Vec::new(),
            steps: 0,
            skipped_batches: 0,
        }
    }

    /// Accuracy of the head that the stage trains.
    pub fn own_accuracy(&self) -> &[f64] {
        match self.stage {
            Stage::Linear => &self.linear_accuracy,
            Stage::Wnll => &self.wnll_accuracy,
        }
    }
}

/// Held-out points scored after every epoch, with the labeled points used
/// as template for WNLL prediction.
#[derive(Clone, Copy, Debug)]
pub struct EvalSet<'a> {
    pub test: &'a DataMatrix,
    pub test_labels: &'a LabelVector,
    pub template: &'a DataMatrix,
    pub template_labels: &'a LabelVector,
    pub wnll: WnllParams,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scores {
    pub linear: f64,
    pub wnll: f64,
}

impl EvalSet<'_> {
    pub fn score(&self, net: &NetworkParams) -> Result<Scores> {
        let linear = linear_accuracy(net, self.test, self.test_labels)?;
        let wnll = evaluate_wnll(net, self.test, self.test_labels, self.template, self.template_labels, &self.wnll, None)?.accuracy;
        Ok(Scores { linear, wnll })
    }
}

fn record_scores(report: &mut StageReport, net: &NetworkParams, eval: Option<&EvalSet<'_>>) -> Result<()> {
    if let Some(eval) = eval {
        let s = eval.score(net)?;
        report.linear_accuracy.push(s.linear);
        report.wnll_accuracy.push(s.wnll);
    }
    Ok(())
}

fn check_labels(data: &DataMatrix, labels: &LabelVector, net: &NetworkParams) -> Result<()> {
    if labels.len() != data.rows() {
        return Err(Error::ShapeMismatch { what: "label count", expected: data.rows(), found: labels.len() });
    }
    if labels.classes() != net.classes() {
        return Err(Error::ShapeMismatch { what: "class count", expected: net.classes(), found: labels.classes() });
    }
    Ok(())
}

/// Training batches of a stage come from their own stream.
fn batch_stream(config: &TrainConfig, pass: usize, stage: Stage) -> crate::rng::StreamRng {
    let offset = match stage {
        Stage::Linear => 0,
        Stage::Wnll => 1,
    };
    Streams::new(config.seed).indexed("batching", 2 * pass as u64 + offset)
}

/// SGD epochs on the linear head, updating every block.
pub fn train_linear_stage(
    mut net: NetworkParams,
    data: &DataMatrix,
    labels: &LabelVector,
    config: &TrainConfig,
    pass: usize,
    eval: Option<&EvalSet<'_>>,
) -> Result<(NetworkParams, StageReport)> {
    check_labels(data, labels, &net)?;
    config.validate(labels.classes())?;
    let mut report = StageReport::new(Stage::Linear, pass);
    let mut opt = Sgd::new(&net, config.momentum, config.weight_decay);
    let mut rng = batch_stream(config, pass, Stage::Linear);
    for epoch in 0..config.linear_epochs {
        let lr = config.linear_lr(pass, epoch);
        let start = net.clone();
        let mut total = 0.0;
        let batches = shuffled_batches(data.rows(), config.batch_linear, &mut rng);
        for batch in &batches {
            let ahead = opt.lookahead(&net, BlockMask::ALL);
            let trace = forward(&ahead, &data.select_rows(batch)?)?;
            let grads = backward(&ahead, &trace, labels.select(batch).labels())?;
            if !grads.loss.is_finite() {
                return Err(Error::Diverged { pass, epoch, last_good: alloc::boxed::Box::new(start) });
            }
            total += grads.loss;
            opt.step(&mut net, &grads.params, lr, BlockMask::ALL);
            report.steps += 1;
        }
        if !net.is_finite() {
            return Err(Error::Diverged { pass, epoch, last_good: alloc::boxed::Box::new(start) });
        }
        report.losses.push(total / batches.len() as f64);
        report.lr.push(lr);
        report.epochs += 1;
        record_scores(&mut report, &net, eval)?;
    }
    Ok((net, report))
}

/// WNLL interpolation of one training batch in the network's feature space.
#[derive(Clone, Debug, PartialEq)]
pub struct WnllForward {
    /// Interpolated scores for the batch rows, row-major `batch × classes`.
    pub scores: Vec<f64>,
    /// Mean cross-entropy of the clamped scores against the batch labels.
    pub loss: f64,
}

/// Interpolates labels for `batch` from `template` (indices into `data`)
/// over the kNN graph of their buffer features. Batch points that are also in
/// the template keep their own labels.
pub fn wnll_forward(
    net: &NetworkParams,
    data: &DataMatrix,
    labels: &LabelVector,
    batch: &[usize],
    template: &[usize],
    graph: GraphParams,
) -> Result<WnllForward> {
    check_labels(data, labels, net)?;
    let classes = labels.classes();
    let template_labels = labels.select(template);
    if let Some(missing) = template_labels.counts().iter().position(|&c| c == 0) {
        return Err(Error::MissingClass(missing));
    }
    let mut slot = vec![usize::MAX; data.rows()];
    let mut points: Vec<usize> = Vec::with_capacity(batch.len() + template.len());
    for &i in template.iter().chain(batch) {
        if slot[i] == usize::MAX {
            slot[i] = points.len();
            points.push(i);
        }
    }
    let features = embed(net, &data.select_rows(&points)?)?;
    let graph = build_graph(&features, graph)?;
    let problem = InterpolationProblem::from_labels(&graph, (0..template.len()).collect(), &template_labels)?;
    let solution = wnll_interpolate(&problem)?;
    let mut scores = Vec::with_capacity(batch.len() * classes);
    for &i in batch {
        scores.extend_from_slice(solution.row(slot[i]));
    }
    let loss = cross_entropy_probs(&scores, classes, labels.select(batch).labels(), WNLL_PROB_FLOOR);
    Ok(WnllForward { scores, loss })
}

/// Buffer-only SGD epochs driven by the WNLL loss through the linear-branch
/// gradient proxy. Batches are drawn from the points outside `template`;
/// batches whose feature graph leaves points without a path to the template
/// are skipped.
pub fn train_wnll_stage(
    mut net: NetworkParams,
    data: &DataMatrix,
    labels: &LabelVector,
    template: &[usize],
    config: &TrainConfig,
    pass: usize,
    eval: Option<&EvalSet<'_>>,
) -> Result<(NetworkParams, StageReport)> {
    check_labels(data, labels, &net)?;
    config.validate(labels.classes())?;
    let mut in_template = vec![false; data.rows()];
    for &t in template {
        in_template[t] = true;
    }
    let pool: Vec<usize> = (0..data.rows()).filter(|&i| !in_template[i]).collect();
    if pool.is_empty() {
        return Err(Error::Empty("no training points outside the template"));
    }
    let mut report = StageReport::new(Stage::Wnll, pass);
    let mut opt = Sgd::new(&net, config.momentum, config.weight_decay);
    let mut rng = batch_stream(config, pass, Stage::Wnll);
    let lr = config.wnll_stage_lr(pass);
    let mut attempted = 0;
    for epoch in 0..config.wnll_epochs {
        let start = net.clone();
        let mut total = 0.0;
        let mut used = 0;
        for positions in shuffled_batches(pool.len(), config.batch_wnll, &mut rng) {
            attempted += 1;
            let mut batch: Vec<usize> = positions.iter().map(|&p| pool[p]).collect();
            batch.sort_unstable();
            let ahead = opt.lookahead(&net, BlockMask::BUFFER);
            let wnll = match wnll_forward(&ahead, data, labels, &batch, template, config.graph) {
                Ok(w) => w,
                Err(Error::UncoveredComponent { .. }) => {
                    report.skipped_batches += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let trace = forward(&ahead, &data.select_rows(&batch)?)?;
            let linear = backward(&ahead, &trace, labels.select(&batch).labels())?;
            if !(wnll.loss.is_finite() && linear.loss.is_finite()) {
                return Err(Error::Diverged { pass, epoch, last_good: alloc::boxed::Box::new(start) });
            }
            let mut grads = linear.params;
            grads.buffer = if config.proxy_scaling {
                let ratio = wnll.loss / linear.loss.max(PROXY_EPS);
                let upstream: Vec<f64> = linear.d_buffer_out.iter().map(|g| g * ratio).collect();
                buffer_gradient(&ahead, &trace, &upstream)
            } else {
                buffer_gradient(&ahead, &trace, &linear.d_buffer_out)
            };
            opt.step(&mut net, &grads, lr, BlockMask::BUFFER);
            total += wnll.loss;
            used += 1;
            report.steps += 1;
        }
        if !net.is_finite() {
            return Err(Error::Diverged { pass, epoch, last_good: alloc::boxed::Box::new(start) });
        }
        report.losses.push(if used > 0 { total / used as f64 } else { f64::NAN });
        report.lr.push(lr);
        report.epochs += 1;
        record_scores(&mut report, &net, eval)?;
    }
    if attempted > 0 && report.steps == 0 {
        return Err(Error::AllBatchesSkipped { pass });
    }
    Ok((net, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub stages: Vec<StageReport>,
    /// Template indices reserved in each pass, ascending.
    pub templates: Vec<Vec<usize>>,
}

/// `config.passes` rounds of linear stage, fresh template split (seed
/// `config.seed + pass`), and WNLL stage. The WNLL stage is left out when
/// `config.wnll_epochs` is zero.
pub fn alternate_train(
    net: NetworkParams,
    data: &DataMatrix,
    labels: &LabelVector,
    config: &TrainConfig,
    eval: Option<&EvalSet<'_>>,
) -> Result<(NetworkParams, TrainReport)> {
    config.validate(labels.classes())?;
    let mut net = net;
    let mut report = TrainReport { stages: Vec::new(), templates: Vec::new() };
    for pass in 0..config.passes {
        let (trained, linear) = train_linear_stage(net, data, labels, config, pass, eval)?;
        net = trained;
        report.stages.push(linear);
        if config.wnll_epochs == 0 {
            continue;
        }
        let split = split_template(labels, config.template_fraction, config.seed.wrapping_add(pass as u64), true)?;
        let (trained, wnll) = train_wnll_stage(net, data, labels, &split.template, config, pass, eval)?;
        net = trained;
        report.stages.push(wnll);
        report.templates.push(split.template);
    }
    Ok((net, report))
}

/// Argmax of the linear head.
pub fn linear_predict(net: &NetworkParams, data: &DataMatrix) -> Result<LabelVector> {
    let trace = forward(net, data)?;
    LabelVector::new(trace.logits.chunks(net.classes()).map(argmax).collect(), net.classes())
}

pub fn linear_accuracy(net: &NetworkParams, data: &DataMatrix, labels: &LabelVector) -> Result<f64> {
    accuracy(&linear_predict(net, data)?, labels)
}

/// Template mini-batching for [`evaluate_wnll`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Batching {
    pub template_batch: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub predictions: LabelVector,
    pub accuracy: f64,
}

/// Labels `test` by WNLL interpolation from `template` in the network's
/// buffer-feature space; the linear head is not used.
pub fn evaluate_wnll(
    net: &NetworkParams,
    test: &DataMatrix,
    test_labels: &LabelVector,
    template: &DataMatrix,
    template_labels: &LabelVector,
    params: &WnllParams,
    batching: Option<Batching>,
) -> Result<Evaluation> {
    let test_features = embed(net, test)?;
    let template_features = embed(net, template)?;
    let predictions = match batching {
        None => wnll_classify(&template_features, template_labels, &test_features, params)?,
        Some(b) => batched_vote(&template_features, template_labels, &test_features, params, b.template_batch, b.seed)?.0,
    };
    let accuracy = accuracy(&predictions, test_labels)?;
    Ok(Evaluation { predictions, accuracy })
}
