//! Exact k-nearest-neighbor search and Gaussian weight graphs.
//!
//! Neighbors are ordered by `(squared distance, index)`, so equal distances
//! resolve to the lower index and every search strategy returns the same
//! lists. Weights are self-tuned per query point:
//! `w(i, j) = exp(-|x_i - x_j|² / σ(i)²)` with `σ(i)` the distance from `i`
//! to its `r`-th neighbor.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::linalg::sq_dist;

/// Neighbor lists of every point, `k` entries each, nearest first.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborLists {
    k: usize,
    indices: Vec<usize>,
    sq_dists: Vec<f64>,
    /// Requested `k` when it had to be reduced to `n - 1`.
    pub clamped_from: Option<usize>,
}

impl NeighborLists {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn sq_dists(&self, i: usize) -> &[f64] {
        &self.sq_dists[i * self.k..(i + 1) * self.k]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum KnnMethod {
    /// O(n²) scan over all pairs.
    BruteForce,
    /// k-d tree; only pays off in low dimension.
    KdTree,
    /// k-d tree up to [`KD_TREE_MAX_DIM`] coordinates, brute force above.
    #[default]
    Auto,
}

pub const KD_TREE_MAX_DIM: usize = 10;

pub fn knn_exact(data: &DataMatrix, k: usize) -> Result<NeighborLists> {
    knn_with(data, k, KnnMethod::Auto)
}

pub fn knn_with(data: &DataMatrix, k: usize, method: KnnMethod) -> Result<NeighborLists> {
    let n = data.rows();
    if k == 0 {
        return Err(Error::InvalidParameter { name: "k", reason: "must be at least 1" });
    }
    if n < 2 {
        return Err(Error::InvalidParameter { name: "data", reason: "nearest neighbors need at least two points" });
    }
    let (k, clamped_from) = if k >= n { (n - 1, Some(k)) } else { (k, None) };
    let lists = match method {
        KnnMethod::BruteForce => brute_force(data, k),
        KnnMethod::KdTree => KdTree::build(data).search_all(k),
        KnnMethod::Auto if data.cols() <= KD_TREE_MAX_DIM => KdTree::build(data).search_all(k),
        KnnMethod::Auto => brute_force(data, k),
    };
    let mut indices = Vec::with_capacity(n * k);
    let mut sq_dists = Vec::with_capacity(n * k);
    for list in lists {
        debug_assert_eq!(list.items.len(), k);
        for (d, j) in list.items {
            indices.push(j);
            sq_dists.push(d);
        }
    }
    Ok(NeighborLists { k, indices, sq_dists, clamped_from })
}

/// The `k` smallest `(distance, index)` pairs seen so far, ascending.
#[derive(Clone)]
struct Candidates {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl Candidates {
    fn new(k: usize) -> Self {
        Self { k, items: Vec::with_capacity(k + 1) }
    }

    fn worst(&self) -> Option<f64> {
        if self.items.len() < self.k {
            None
        } else {
            self.items.last().map(|&(d, _)| d)
        }
    }

    #[inline]
    fn offer(&mut self, d: f64, j: usize) {
        if self.items.len() == self.k {
            let &(wd, wj) = self.items.last().unwrap();
            if cmp_pair((d, j), (wd, wj)) != Ordering::Less {
                return;
            }
            self.items.pop();
        }
        let pos = self.items.partition_point(|&p| cmp_pair(p, (d, j)) == Ordering::Less);
        self.items.insert(pos, (d, j));
    }
}

fn cmp_pair(a: (f64, usize), b: (f64, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))
}

const BRUTE_BLOCK: usize = 64;

fn brute_force(data: &DataMatrix, k: usize) -> Vec<Candidates> {
    let n = data.rows();
    let mut lists = vec![Candidates::new(k); n];
    // Each pair is evaluated once and offered to both endpoints; a block of
    // query rows stays in cache while the rest of the data streams past.
    for block_start in (0..n).step_by(BRUTE_BLOCK) {
        let block_end = (block_start + BRUTE_BLOCK).min(n);
        for j in block_start + 1..n {
            let row_j = data.row(j);
            for i in block_start..block_end.min(j) {
                let d = sq_dist(data.row(i), row_j);
                lists[i].offer(d, j);
                lists[j].offer(d, i);
            }
        }
    }
    lists
}

const LEAF_SIZE: usize = 16;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

struct KdTree<'a> {
    data: &'a DataMatrix,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(data: &'a DataMatrix) -> Self {
        let mut tree = Self { data, order: (0..data.rows()).collect(), nodes: Vec::new() };
        tree.build_node(0, data.rows());
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let data = self.data;
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data.row(a)[dim].total_cmp(&data.row(b)[dim]).then(a.cmp(&b))
        });
        let value = data.row(self.order[mid])[dim];
        self.nodes.push(Node::Split { dim, value, left: 0, right: 0 });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        if let Node::Split { left: l, right: r, .. } = &mut self.nodes[id] {
            *l = left;
            *r = right;
        }
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let d = self.data.cols();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.order[start..end] {
            for (c, &v) in self.data.row(i).iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let mut best = 0;
        for c in 1..d {
            if hi[c] - lo[c] > hi[best] - lo[best] {
                best = c;
            }
        }
        best
    }

    fn search_all(&self, k: usize) -> Vec<Candidates> {
        (0..self.data.rows())
            .map(|q| {
                let mut cand = Candidates::new(k);
                self.search(0, q, &mut cand);
                cand
            })
            .collect()
    }

    fn search(&self, node: usize, q: usize, cand: &mut Candidates) {
        let query = self.data.row(q);
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j != q {
                        cand.offer(sq_dist(query, self.data.row(j)), j);
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, cand);
                // Distances sum non-negative terms, so diff² is a lower bound;
                // ties must still be explored for the index rule.
                if cand.worst().is_none_or(|w| diff * diff <= w) {
                    self.search(far, q, cand);
                }
            }
        }
    }
}

/// Per-point scale: the distance to the `r`-th nearest neighbor (1-based).
///
/// A zero distance (duplicated points) falls back to the smallest positive
/// neighbor distance of that point, or to 1 when there is none.
pub fn estimate_sigma(neighbors: &NeighborLists, r: usize) -> Result<Vec<f64>> {
    if r == 0 || r > neighbors.k() {
        return Err(Error::InvalidParameter { name: "r", reason: "sigma rank must lie in 1..=k" });
    }
    Ok((0..neighbors.len())
        .map(|i| {
            let dists = neighbors.sq_dists(i);
            let d = libm::sqrt(dists[r - 1]);
            if d > 0.0 {
                d
            } else {
                dists.iter().find(|&&v| v > 0.0).map_or(1.0, |&v| libm::sqrt(v))
            }
        })
        .collect())
}

/// Directed sparse weight graph in compressed-row form.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseWeightGraph {
    n: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    sq_dists: Option<Vec<f64>>,
    sigma: Option<Vec<f64>>,
    k: usize,
    r: usize,
}

impl SparseWeightGraph {
    /// Graph from arbitrary positive weights. Edges are grouped by source
    /// and keep their relative order.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut counts = vec![0usize; n + 1];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::ShapeMismatch { what: "edge endpoint bound", expected: n, found: i.max(j) });
            }
            if i == j {
                return Err(Error::InvalidParameter { name: "edges", reason: "self-edges are not allowed" });
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidParameter { name: "edges", reason: "weights must be finite and positive" });
            }
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut fill = counts;
        let mut targets = vec![0; edges.len()];
        let mut weights = vec![0.0; edges.len()];
        for &(i, j, w) in edges {
            targets[fill[i]] = j;
            weights[fill[i]] = w;
            fill[i] += 1;
        }
        for i in 0..n {
            let row = &targets[offsets[i]..offsets[i + 1]];
            for (a, &t) in row.iter().enumerate() {
                if row[..a].contains(&t) {
                    return Err(Error::InvalidParameter { name: "edges", reason: "duplicate edge" });
                }
            }
        }
        let k = (0..n).map(|i| offsets[i + 1] - offsets[i]).max().unwrap_or(0);
        Ok(Self { n, offsets, targets, weights, sq_dists: None, sigma: None, k, r: 0 })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len()
    }

    /// Neighbor count per point (for kNN graphs) or the largest out-degree.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Rank of the neighbor defining σ; 0 for graphs built from raw edges.
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn sigma(&self) -> Option<&[f64]> {
        self.sigma.as_deref()
    }

    /// Out-edges of `i` as `(target, weight)`.
    pub fn edges(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        self.targets[range.clone()].iter().copied().zip(self.weights[range].iter().copied())
    }

    /// Out-edges of `i` as `(target, squared distance, weight)`; distances
    /// are NaN for graphs built from raw edges.
    pub fn edges_with_distance(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        let range = self.offsets[i]..self.offsets[i + 1];
        let dists = self.sq_dists.as_deref();
        range.map(move |e| (self.targets[e], dists.map_or(f64::NAN, |d| d[e]), self.weights[e]))
    }

    /// `w(i, j)`, or `None` when `j` is not among the out-neighbors of `i`.
    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges(i).find(|&(t, _)| t == j).map(|(_, w)| w)
    }

    /// `w(i, j) + w(j, i)` with absent edges counted as zero.
    pub fn symmetrized_weight(&self, i: usize, j: usize) -> f64 {
        self.weight(i, j).unwrap_or(0.0) + self.weight(j, i).unwrap_or(0.0)
    }

    /// In-edges of every point as `(source, weight)` lists, sources ascending.
    pub fn incoming(&self) -> Vec<Vec<(usize, f64)>> {
        let mut incoming = vec![Vec::new(); self.n];
        for i in 0..self.n {
            for (j, w) in self.edges(i) {
                incoming[j].push((i, w));
            }
        }
        incoming
    }
}

/// Builds `w(i, j) = exp(-d²(i, j) / σ(i)²)` on the neighbor lists.
///
/// Weights that would underflow to zero are held at the smallest positive
/// double so every stored edge stays positive.
pub fn assemble_weights(neighbors: &NeighborLists, sigma: &[f64], r: usize) -> Result<SparseWeightGraph> {
    let n = neighbors.len();
    if sigma.len() != n {
        return Err(Error::ShapeMismatch { what: "sigma length", expected: n, found: sigma.len() });
    }
    if sigma.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
        return Err(Error::InvalidParameter { name: "sigma", reason: "every scale must be finite and positive" });
    }
    let k = neighbors.k();
    let mut weights = Vec::with_capacity(n * k);
    for (i, &s) in sigma.iter().enumerate() {
        let s2 = s * s;
        for &d2 in neighbors.sq_dists(i) {
            weights.push(libm::exp(-d2 / s2).max(f64::MIN_POSITIVE));
        }
    }
    Ok(SparseWeightGraph {
        n,
        offsets: (0..=n).map(|i| i * k).collect(),
        targets: neighbors.indices.clone(),
        weights,
        sq_dists: Some(neighbors.sq_dists.clone()),
        sigma: Some(sigma.to_vec()),
        k,
        r,
    })
}

/// Neighbor count, σ rank and search strategy for [`build_graph`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphParams {
    pub k: usize,
    pub r: usize,
    pub method: KnnMethod,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { k: 15, r: 8, method: KnnMethod::Auto }
    }
}

/// kNN search, σ estimation and weight assembly in one call. When the point
/// count forces `k` below `r`, `r` is reduced to the effective `k`.
pub fn build_graph(data: &DataMatrix, params: GraphParams) -> Result<SparseWeightGraph> {
    if params.r == 0 || params.r > params.k {
        return Err(Error::InvalidParameter { name: "r", reason: "sigma rank must lie in 1..=k" });
    }
    let neighbors = knn_with(data, params.k, params.method)?;
    let r = params.r.min(neighbors.k());
    let sigma = estimate_sigma(&neighbors, r)?;
    assemble_weights(&neighbors, &sigma, r)
}
