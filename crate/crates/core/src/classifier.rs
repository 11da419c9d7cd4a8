//! Classification front ends: WNLL interpolation from a labeled training
//! set, template mini-batching with majority voting, and a softmax-regression
//! baseline.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::coverage::recommend_template_size;
use crate::data::{shuffled_batches, stratified_batches, DataMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::knn::{build_graph, GraphParams};
use crate::linalg::{affine_rows, argmax, log_sum_exp};
use crate::rng::Streams;
use crate::solver::{wnll_interpolate, InterpolationProblem, SolveStats, SolverOptions};

/// Mini-batch settings of the softmax baseline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftmaxConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Points per gradient step; `0` or anything `≥ n` means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self { epochs: 40, lr: 0.5, batch_size: 128, seed: 0 }
    }
}

/// Multinomial logistic regression. `weight` is row-major `classes × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxModel {
    pub dim: usize,
    pub classes: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub config: SoftmaxConfig,
    /// Mean training cross-entropy after each epoch.
    pub loss_history: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        Self {
            dim,
            classes,
            weight: vec![0.0; dim * classes],
            bias: vec![0.0; classes],
            config: SoftmaxConfig::default(),
            loss_history: Vec::new(),
        }
    }

    /// Affine scores, row-major `rows × classes`.
    pub fn logits(&self, data: &DataMatrix) -> Result<Vec<f64>> {
        if data.cols() != self.dim {
            return Err(Error::ShapeMismatch { what: "feature dimension", expected: self.dim, found: data.cols() });
        }
        let mut out = vec![0.0; data.rows() * self.classes];
        affine_rows(data.values(), data.rows(), &self.weight, &self.bias, &mut out);
        Ok(out)
    }

    fn mean_loss(&self, data: &DataMatrix, labels: &[usize]) -> f64 {
        let logits = self.logits(data).expect("dimension checked by caller");
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(r, &y)| {
                let z = &logits[r * self.classes..(r + 1) * self.classes];
                log_sum_exp(z) - z[y]
            })
            .sum();
        total / labels.len() as f64
    }
}

/// Mini-batch gradient descent on mean cross-entropy from zero weights.
pub fn train_softmax(data: &DataMatrix, labels: &LabelVector, config: SoftmaxConfig) -> Result<SoftmaxModel> {
    let n = data.rows();
    if labels.len() != n {
        return Err(Error::ShapeMismatch { what: "label count", expected: n, found: labels.len() });
    }
    if labels.present_classes().len() < 2 {
        return Err(Error::TooFewClasses(labels.present_classes().len()));
    }
    if !(config.lr.is_finite() && config.lr > 0.0) {
        return Err(Error::InvalidParameter { name: "lr", reason: "must be positive" });
    }
    let (dim, classes) = (data.cols(), labels.classes());
    let mut model = SoftmaxModel { config, ..SoftmaxModel::zeros(dim, classes) };
    let batch_size = if config.batch_size == 0 { n } else { config.batch_size.min(n) };
    let mut rng = Streams::new(config.seed).stream("batching");
    let y = labels.labels();
    let mut probs = vec![0.0; batch_size * classes];
    for epoch in 0..config.epochs {
        let batches = if batch_size == n { vec![(0..n).collect()] } else { shuffled_batches(n, batch_size, &mut rng) };
        for batch in &batches {
            let rows = batch.len();
            for (r, &i) in batch.iter().enumerate() {
                let z = &mut probs[r * classes..(r + 1) * classes];
                affine_rows(data.row(i), 1, &model.weight, &model.bias, z);
                let lse = log_sum_exp(z);
                for v in z.iter_mut() {
                    *v = libm::exp(*v - lse);
                }
                z[y[i]] -= 1.0;
            }
            let step = config.lr / rows as f64;
            for (r, &i) in batch.iter().enumerate() {
                let x = data.row(i);
                for c in 0..classes {
                    let g = probs[r * classes + c] * step;
                    if g == 0.0 {
                        continue;
                    }
                    model.bias[c] -= g;
                    for (w, &xi) in model.weight[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                        *w -= g * xi;
                    }
                }
            }
        }
        let loss = model.mean_loss(data, y);
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

/// Argmax of the affine scores, lowest class on ties.
pub fn predict_softmax(model: &SoftmaxModel, data: &DataMatrix) -> Result<LabelVector> {
    let logits = model.logits(data)?;
    let labels = logits.chunks(model.classes).map(argmax).collect();
    LabelVector::new(labels, model.classes)
}

/// Graph and solver settings for WNLL classification. `mu: None` uses
/// `|X| / |X^te| - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct WnllParams {
    pub graph: GraphParams,
    pub mu: Option<f64>,
    pub solver: SolverOptions,
}

/// Interpolated test-row scores and the resulting labels.
#[derive(Clone, Debug, PartialEq)]
pub struct WnllOutcome {
    pub predictions: LabelVector,
    /// Row-major `test rows × classes`.
    pub scores: Vec<f64>,
    pub stats: SolveStats,
}

fn require_all_classes(labels: &LabelVector) -> Result<()> {
    match labels.counts().iter().position(|&c| c == 0) {
        Some(missing) => Err(Error::MissingClass(missing)),
        None => Ok(()),
    }
}

/// Labels every test row by WNLL interpolation over one graph on the point
/// set `train ∪ test`, with the whole training set as template. A test row
/// identical to a training row is that labeled point and takes its label.
pub fn wnll_classify(train: &DataMatrix, labels: &LabelVector, test: &DataMatrix, params: &WnllParams) -> Result<LabelVector> {
    Ok(wnll_classify_scores(train, labels, test, params)?.predictions)
}

/// [`wnll_classify`] keeping the interpolated scores.
pub fn wnll_classify_scores(
    train: &DataMatrix,
    labels: &LabelVector,
    test: &DataMatrix,
    params: &WnllParams,
) -> Result<WnllOutcome> {
    if labels.len() != train.rows() {
        return Err(Error::ShapeMismatch { what: "label count", expected: train.rows(), found: labels.len() });
    }
    if train.cols() != test.cols() {
        return Err(Error::ShapeMismatch { what: "test feature dimension", expected: train.cols(), found: test.cols() });
    }
    if labels.classes() < 2 {
        return Err(Error::TooFewClasses(labels.classes()));
    }
    require_all_classes(labels)?;
    let classes = labels.classes();
    let m = train.rows();

    let mut known: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
    for i in (0..m).rev() {
        known.insert(row_key(train.row(i)), i);
    }
    // Node of each test row: a training index, or m + position among the
    // new rows.
    let mut node = Vec::with_capacity(test.rows());
    let mut fresh = Vec::new();
    for i in 0..test.rows() {
        match known.get(&row_key(test.row(i))) {
            Some(&t) => node.push(t),
            None => {
                node.push(m + fresh.len());
                fresh.push(i);
            }
        }
    }
    let solution = if fresh.is_empty() {
        None
    } else {
        let all = train.stack(&test.select_rows(&fresh)?)?;
        let graph = build_graph(&all, params.graph)?;
        let mut problem = InterpolationProblem::from_labels(&graph, (0..m).collect(), labels)?.with_solver(params.solver);
        if let Some(mu) = params.mu {
            problem = problem.with_mu(mu)?;
        }
        Some(wnll_interpolate(&problem)?)
    };
    let one_hot = labels.one_hot();
    let mut scores = Vec::with_capacity(test.rows() * classes);
    for &v in &node {
        match &solution {
            Some(s) => scores.extend_from_slice(s.row(v)),
            None => scores.extend_from_slice(&one_hot[v * classes..(v + 1) * classes]),
        }
    }
    let predictions = LabelVector::new(scores.chunks(classes).map(argmax).collect(), classes)?;
    let stats = solution.map(|s| s.stats).unwrap_or_default();
    Ok(WnllOutcome { predictions, scores, stats })
}

/// Bit pattern of a row, with `-0.0` folded onto `0.0`.
fn row_key(row: &[f64]) -> Vec<u64> {
    row.iter().map(|&v| (v + 0.0).to_bits()).collect()
}

/// Per-test-point class votes collected over template batches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoteTally {
    classes: usize,
    batches: usize,
    votes: Vec<u32>,
    /// `ceil(N · H_N)`, the smallest template batch expected to cover all
    /// `N` classes under uniform sampling.
    pub recommended_batch: usize,
    pub smallest_batch: usize,
}

impl VoteTally {
    pub fn new(points: usize, classes: usize) -> Self {
        Self { classes, batches: 0, votes: vec![0; points * classes], recommended_batch: 0, smallest_batch: 0 }
    }

    pub fn add(&mut self, predictions: &LabelVector) {
        for (i, &c) in predictions.labels().iter().enumerate() {
            self.votes[i * self.classes + c] += 1;
        }
        self.batches += 1;
    }

    pub fn len(&self) -> usize {
        self.votes.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn batches(&self) -> usize {
        self.batches
    }

    pub fn votes(&self, point: usize) -> &[u32] {
        &self.votes[point * self.classes..(point + 1) * self.classes]
    }

    /// Plurality class; ties go to the lowest class index.
    pub fn winner(&self, point: usize) -> usize {
        let v = self.votes(point);
        let mut best = 0;
        for c in 1..v.len() {
            if v[c] > v[best] {
                best = c;
            }
        }
        best
    }

    pub fn below_recommendation(&self) -> bool {
        self.smallest_batch < self.recommended_batch
    }
}

/// Splits the training set into stratified template batches of at most
/// `template_batch_size` points, runs one WNLL solve per batch over
/// `batch ∪ test`, and takes the per-point majority vote.
pub fn batched_vote(
    train: &DataMatrix,
    labels: &LabelVector,
    test: &DataMatrix,
    params: &WnllParams,
    template_batch_size: usize,
    seed: u64,
) -> Result<(LabelVector, VoteTally)> {
    let classes = labels.classes();
    if labels.len() != train.rows() {
        return Err(Error::ShapeMismatch { what: "label count", expected: train.rows(), found: labels.len() });
    }
    if template_batch_size < classes {
        return Err(Error::TooFewForStratified { required: classes, available: template_batch_size });
    }
    require_all_classes(labels)?;
    let mut rng = Streams::new(seed).stream("batching");
    let batches = stratified_batches(labels, template_batch_size, &mut rng)?;
    let mut tally = VoteTally::new(test.rows(), classes);
    tally.recommended_batch = recommend_template_size(classes, 1.0)?;
    tally.smallest_batch = batches.iter().map(Vec::len).min().unwrap_or(0);
    for batch in &batches {
        let predictions = wnll_classify(&train.select_rows(batch)?, &labels.select(batch), test, params)?;
        tally.add(&predictions);
    }
    let winners = (0..test.rows()).map(|i| tally.winner(i)).collect();
    Ok((LabelVector::new(winners, classes)?, tally))
}

/// Fraction of positions where `pred` and `truth` agree.
pub fn accuracy(pred: &LabelVector, truth: &LabelVector) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::ShapeMismatch { what: "prediction count", expected: truth.len(), found: pred.len() });
    }
    if truth.is_empty() {
        return Err(Error::Empty("no labels to score"));
    }
    let hits = pred.labels().iter().zip(truth.labels()).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}
