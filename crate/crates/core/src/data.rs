//! Point clouds, class labels and template splits.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::StreamRng;

/// `rows` points with `cols` coordinates each, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 {
            return Err(Error::Empty("data matrix has no rows"));
        }
        if cols == 0 {
            return Err(Error::Empty("data matrix has no columns"));
        }
        if values.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                what: "data matrix value count",
                expected: rows * cols,
                found: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: pos / cols, col: pos % cols });
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut values = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch { what: "row length", expected: cols, found: row.len() });
            }
            values.extend_from_slice(row);
        }
        Self::new(rows.len(), cols, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            if i >= self.rows {
                return Err(Error::ShapeMismatch { what: "row index bound", expected: self.rows, found: i });
            }
            values.extend_from_slice(self.row(i));
        }
        Self::new(indices.len(), self.cols, values)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn stack(&self, other: &Self) -> Result<Self> {
        if other.cols != self.cols {
            return Err(Error::ShapeMismatch { what: "column count", expected: self.cols, found: other.cols });
        }
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        values.extend_from_slice(&self.values);
        values.extend_from_slice(&other.values);
        Ok(Self { rows: self.rows + other.rows, cols: self.cols, values })
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, self.values.iter().map(|v| v * factor).collect())
    }
}

/// One class index per point.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= classes) {
            return Err(Error::LabelOutOfRange { index, label, classes });
        }
        Ok(Self { labels, classes })
    }

    /// Class count inferred as `max + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        let classes = labels.iter().max().map_or(0, |m| m + 1);
        Self::new(labels, classes)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self { labels: indices.iter().map(|&i| self.labels[i]).collect(), classes: self.classes }
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Classes with at least one point, ascending.
    pub fn present_classes(&self) -> Vec<usize> {
        self.counts().iter().enumerate().filter(|(_, &c)| c > 0).map(|(k, _)| k).collect()
    }

    /// Row-major `len × classes` one-hot matrix.
    pub fn one_hot(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.labels.len() * self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[i * self.classes + l] = 1.0;
        }
        out
    }
}

/// Partition of `0..n` into a labeled template and the remaining points.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub template: Vec<usize>,
    pub remainder: Vec<usize>,
    pub seed: u64,
}

/// Reserves `round(fraction · n)` points as template.
///
/// With `stratified`, every class present in `labels` receives at least one
/// template point and the rest of the budget is shared in proportion to class
/// sizes. Both index lists are returned in ascending order.
pub fn split_template(labels: &LabelVector, fraction: f64, seed: u64, stratified: bool) -> Result<DatasetSplit> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Empty("no labels to split"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidParameter { name: "fraction", reason: "must lie strictly between 0 and 1" });
    }
    let size = (libm::round(fraction * n as f64) as usize).clamp(1, n);
    let mut rng = crate::rng::Streams::new(seed).stream("split");

    let mut template = if stratified {
        stratified_take(labels, size, &mut rng)?
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        order.truncate(size);
        order
    };
    template.sort_unstable();
    let mut in_template = vec![false; n];
    for &i in &template {
        in_template[i] = true;
    }
    let remainder = (0..n).filter(|&i| !in_template[i]).collect();
    Ok(DatasetSplit { template, remainder, seed })
}

fn stratified_take(labels: &LabelVector, size: usize, rng: &mut StreamRng) -> Result<Vec<usize>> {
    let counts = labels.counts();
    let present = labels.present_classes();
    if size < present.len() {
        return Err(Error::TooFewForStratified { required: present.len(), available: size });
    }
    let quotas = proportional_quotas(&counts, size);
    let mut by_class = members_by_class(labels);
    let mut out = Vec::with_capacity(size);
    for (class, members) in by_class.iter_mut().enumerate() {
        members.shuffle(rng);
        out.extend_from_slice(&members[..quotas[class]]);
    }
    Ok(out)
}

/// One slot per non-empty class, the remaining `total - present` slots shared
/// by largest remainder over `count - 1`. Ties go to the lower class index.
fn proportional_quotas(counts: &[usize], total: usize) -> Vec<usize> {
    let present = counts.iter().filter(|&&c| c > 0).count();
    let spare_pool: usize = counts.iter().map(|&c| c.saturating_sub(1)).sum();
    let budget = total - present;
    let mut quotas: Vec<usize> = counts.iter().map(|&c| usize::from(c > 0)).collect();
    if budget == 0 || spare_pool == 0 {
        return quotas;
    }
    let mut remainders = Vec::with_capacity(counts.len());
    let mut assigned = 0;
    for (class, &c) in counts.iter().enumerate() {
        let spare = c.saturating_sub(1);
        let exact = budget * spare;
        let whole = exact / spare_pool;
        quotas[class] += whole;
        assigned += whole;
        remainders.push((exact % spare_pool, class));
    }
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, class) in remainders.iter().take(budget - assigned) {
        quotas[class] += 1;
    }
    quotas
}

fn members_by_class(labels: &LabelVector) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); labels.classes()];
    for (i, &l) in labels.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

/// Deals positions `0..labels.len()` into `ceil(n / batch_size)` batches so
/// that every batch holds every present class.
///
/// Classes are shuffled internally and dealt round-robin, which keeps batch
/// sizes within one of each other.
pub fn stratified_batches(labels: &LabelVector, batch_size: usize, rng: &mut StreamRng) -> Result<Vec<Vec<usize>>> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::Empty("no points to batch"));
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter { name: "batch_size", reason: "must be positive" });
    }
    let batches = n.div_ceil(batch_size);
    let counts = labels.counts();
    if let Some(&smallest) = counts.iter().filter(|&&c| c > 0).min() {
        if smallest < batches {
            return Err(Error::TooFewForStratified { required: batches, available: smallest });
        }
    }
    let mut out = vec![Vec::with_capacity(batch_size); batches];
    let mut position = 0;
    for mut members in members_by_class(labels) {
        members.shuffle(rng);
        for i in members {
            out[position % batches].push(i);
            position += 1;
        }
    }
    for batch in &mut out {
        batch.sort_unstable();
    }
    Ok(out)
}

/// Shuffled consecutive chunks of `0..n`, the last one possibly short.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut StreamRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}
