//! Harmonic extension and weighted nonlocal Laplacian (WNLL) interpolation.
//!
//! For every unlabeled point `x` the interpolant `u` satisfies
//!
//! ```text
//! Σ_y (w(x,y) + w(y,x)) (u(x) - u(y)) + μ Σ_{y ∈ T} w(y,x) (u(x) - u(y)) = 0
//! ```
//!
//! with `u = g` on the template `T` and `μ = |X| / |T| - 1`. Setting `μ = 0`
//! gives the plain harmonic extension. The unknowns form a symmetric,
//! diagonally dominant system that is solved with Jacobi-preconditioned
//! conjugate gradients, one right-hand side per class.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::LabelVector;
use crate::error::{Error, Result};
use crate::knn::SparseWeightGraph;
use crate::linalg::{argmax, dot};

/// Connected components of the symmetrized graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentReport {
    /// Component id of every point.
    pub component_of: Vec<usize>,
    /// Members of each component, ascending; components ordered by their
    /// smallest member.
    pub components: Vec<Vec<usize>>,
    /// Ids of components without any template point.
    pub uncovered: Vec<usize>,
}

impl ComponentReport {
    pub fn is_covered(&self) -> bool {
        self.uncovered.is_empty()
    }

    pub fn uncovered_points(&self) -> impl Iterator<Item = usize> + '_ {
        self.uncovered.iter().flat_map(|&c| self.components[c].iter().copied())
    }
}

pub fn check_connectivity(graph: &SparseWeightGraph, template_ids: &[usize]) -> ComponentReport {
    let n = graph.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for (j, _) in graph.edges(i) {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                // Smaller root wins, so roots are component minima.
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut component_of = vec![usize::MAX; n];
    let mut components: Vec<Vec<usize>> = Vec::new();
    let mut id_of_root = vec![usize::MAX; n];
    for (i, slot) in component_of.iter_mut().enumerate() {
        let root = find(&mut parent, i);
        if id_of_root[root] == usize::MAX {
            id_of_root[root] = components.len();
            components.push(Vec::new());
        }
        *slot = id_of_root[root];
        components[id_of_root[root]].push(i);
    }
    let mut covered = vec![false; components.len()];
    for &t in template_ids {
        if t < n {
            covered[component_of[t]] = true;
        }
    }
    let uncovered = (0..components.len()).filter(|&c| !covered[c]).collect();
    ComponentReport { component_of, components, uncovered }
}

/// What to do with points whose component contains no template point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum UncoveredPolicy {
    #[default]
    Error,
    /// Assign the uniform distribution `1/C`.
    Uniform,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Target relative residual `‖Ax - b‖ / ‖b‖` per class column.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 10_000 }
    }
}

/// Graph, template and one-hot (or any row-stochastic) boundary labels.
#[derive(Clone, Debug)]
pub struct InterpolationProblem<'g> {
    graph: &'g SparseWeightGraph,
    template_ids: Vec<usize>,
    template_labels: Vec<f64>,
    classes: usize,
    mu: f64,
    pub uncovered: UncoveredPolicy,
    pub solver: SolverOptions,
}

impl<'g> InterpolationProblem<'g> {
    /// `template_labels` is a row-major `template_ids.len() × classes`
    /// matrix whose rows each sum to one.
    pub fn new(
        graph: &'g SparseWeightGraph,
        template_ids: Vec<usize>,
        template_labels: Vec<f64>,
        classes: usize,
    ) -> Result<Self> {
        let n = graph.len();
        if template_ids.is_empty() {
            return Err(Error::Empty("template"));
        }
        if classes == 0 {
            return Err(Error::InvalidParameter { name: "classes", reason: "must be positive" });
        }
        if template_labels.len() != template_ids.len() * classes {
            return Err(Error::ShapeMismatch {
                what: "template label entries",
                expected: template_ids.len() * classes,
                found: template_labels.len(),
            });
        }
        let mut seen = vec![false; n];
        for &t in &template_ids {
            if t >= n || seen[t] {
                return Err(Error::BadTemplate(t));
            }
            seen[t] = true;
        }
        for (row, g) in template_labels.chunks(classes).enumerate() {
            if let Some(col) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
            if libm::fabs(g.iter().sum::<f64>() - 1.0) > 1e-9 {
                return Err(Error::InvalidParameter { name: "template_labels", reason: "rows must sum to one" });
            }
        }
        let mu = n as f64 / template_ids.len() as f64 - 1.0;
        Ok(Self {
            graph,
            template_ids,
            template_labels,
            classes,
            mu,
            uncovered: UncoveredPolicy::default(),
            solver: SolverOptions::default(),
        })
    }

    /// One-hot boundary data from class labels aligned with `template_ids`.
    pub fn from_labels(graph: &'g SparseWeightGraph, template_ids: Vec<usize>, labels: &LabelVector) -> Result<Self> {
        if labels.len() != template_ids.len() {
            return Err(Error::ShapeMismatch {
                what: "template label count",
                expected: template_ids.len(),
                found: labels.len(),
            });
        }
        Self::new(graph, template_ids, labels.one_hot(), labels.classes())
    }

    pub fn with_mu(mut self, mu: f64) -> Result<Self> {
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(Error::InvalidParameter { name: "mu", reason: "must be finite and non-negative" });
        }
        self.mu = mu;
        Ok(self)
    }

    pub fn with_uncovered(mut self, policy: UncoveredPolicy) -> Self {
        self.uncovered = policy;
        self
    }

    pub fn with_solver(mut self, solver: SolverOptions) -> Self {
        self.solver = solver;
        self
    }

    pub fn graph(&self) -> &SparseWeightGraph {
        self.graph
    }

    pub fn template_ids(&self) -> &[usize] {
        &self.template_ids
    }

    pub fn template_labels(&self) -> &[f64] {
        &self.template_labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// The reduced system `A u = B` over unlabeled points.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    /// Global index of each unknown, ascending.
    pub unknowns: Vec<usize>,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
    rhs: Vec<f64>,
    classes: usize,
    /// Points left out of the system because their component has no
    /// template point (only under [`UncoveredPolicy::Uniform`]).
    pub unreachable: Vec<usize>,
}

impl LinearSystem {
    pub fn dim(&self) -> usize {
        self.unknowns.len()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// Row `r` as `(column, value)` pairs, columns ascending.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[r]..self.offsets[r + 1];
        self.cols[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn entry(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(j, _)| j == c).map_or(0.0, |(_, v)| v)
    }

    pub fn rhs(&self, r: usize, class: usize) -> f64 {
        self.rhs[r * self.classes + class]
    }

    pub fn rhs_column(&self, class: usize) -> Vec<f64> {
        (0..self.dim()).map(|r| self.rhs(r, class)).collect()
    }

    /// `out = A x`, summing each row left to right.
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for e in self.offsets[r]..self.offsets[r + 1] {
                acc += self.values[e] * x[self.cols[e]];
            }
            *o = acc;
        }
    }

    /// Dense row-major copy of `A`.
    pub fn to_dense(&self) -> Vec<f64> {
        let m = self.dim();
        let mut out = vec![0.0; m * m];
        for r in 0..m {
            for (c, v) in self.row(r) {
                out[r * m + c] = v;
            }
        }
        out
    }
}

pub fn assemble_system(problem: &InterpolationProblem<'_>) -> Result<LinearSystem> {
    let graph = problem.graph;
    let n = graph.len();
    let classes = problem.classes;
    let mu = problem.mu;

    let mut template_row = vec![usize::MAX; n];
    for (row, &t) in problem.template_ids.iter().enumerate() {
        template_row[t] = row;
    }

    let report = check_connectivity(graph, &problem.template_ids);
    let mut unreachable = Vec::new();
    if let Some(&first) = report.uncovered.first() {
        match problem.uncovered {
            UncoveredPolicy::Error => {
                return Err(Error::UncoveredComponent { points: report.components[first].clone() });
            }
            UncoveredPolicy::Uniform => {
                unreachable = report.uncovered_points().collect();
                unreachable.sort_unstable();
            }
        }
    }
    let mut local = vec![usize::MAX; n];
    let mut unknowns = Vec::new();
    let mut skip = vec![false; n];
    for &p in &unreachable {
        skip[p] = true;
    }
    for x in 0..n {
        if template_row[x] == usize::MAX && !skip[x] {
            local[x] = unknowns.len();
            unknowns.push(x);
        }
    }

    let incoming = graph.incoming();
    let m = unknowns.len();
    let mut offsets = Vec::with_capacity(m + 1);
    offsets.push(0);
    let mut cols = Vec::new();
    let mut values = Vec::new();
    let mut diag = vec![0.0; m];
    let mut rhs = vec![0.0; m * classes];
    // (neighbor, w(x,y) + w(y,x) contribution, w(y,x) contribution)
    let mut terms: Vec<(usize, f64, f64)> = Vec::new();
    let mut row_entries: Vec<(usize, f64)> = Vec::new();

    for (r, &x) in unknowns.iter().enumerate() {
        terms.clear();
        terms.extend(graph.edges(x).map(|(y, w)| (y, w, 0.0)));
        terms.extend(incoming[x].iter().map(|&(y, w)| (y, w, w)));
        terms.sort_by_key(|t| t.0);

        let mut d = 0.0;
        let mut labeled_in = 0.0;
        row_entries.clear();
        let mut idx = 0;
        while idx < terms.len() {
            let y = terms[idx].0;
            let mut sym = 0.0;
            let mut w_in = 0.0;
            while idx < terms.len() && terms[idx].0 == y {
                sym += terms[idx].1;
                w_in += terms[idx].2;
                idx += 1;
            }
            d += sym;
            let t = template_row[y];
            if t != usize::MAX {
                labeled_in += w_in;
                let coef = sym + mu * w_in;
                let g = &problem.template_labels[t * classes..(t + 1) * classes];
                for (c, &gv) in g.iter().enumerate() {
                    rhs[r * classes + c] += coef * gv;
                }
            } else {
                row_entries.push((local[y], -sym));
            }
        }
        d += mu * labeled_in;
        diag[r] = d;
        let at = row_entries.partition_point(|&(c, _)| c < r);
        row_entries.insert(at, (r, d));
        for &(c, v) in &row_entries {
            cols.push(c);
            values.push(v);
        }
        offsets.push(cols.len());
    }

    Ok(LinearSystem { unknowns, offsets, cols, values, diag, rhs, classes, unreachable })
}

/// Iteration counts and final relative residuals, one entry per class.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SolveStats {
    pub iterations: Vec<usize>,
    pub residuals: Vec<f64>,
}

impl SolveStats {
    pub fn max_iterations(&self) -> usize {
        self.iterations.iter().copied().max().unwrap_or(0)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Jacobi-preconditioned CG on every class column. Returns the row-major
/// `dim × classes` solution. A column stops once its relative residual is at
/// most `tol` and its last few updates together moved no entry by more than
/// `tol` times the largest entry.
pub fn solve_cg(system: &LinearSystem, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let m = system.dim();
    let classes = system.classes;
    let mut solution = vec![0.0; m * classes];
    let mut stats = SolveStats::default();
    for c in 0..classes {
        let b = system.rhs_column(c);
        let (x, iterations, residual) = pcg(system, &b, tol, max_iter, c)?;
        for (r, v) in x.into_iter().enumerate() {
            solution[r * classes + c] = v;
        }
        stats.iterations.push(iterations);
        stats.residuals.push(residual);
    }
    Ok((solution, stats))
}

/// Updates summed when judging whether the iterate has settled.
const SETTLE_WINDOW: usize = 8;

fn pcg(system: &LinearSystem, b: &[f64], tol: f64, max_iter: usize, column: usize) -> Result<(Vec<f64>, usize, f64)> {
    let m = b.len();
    let mut x = vec![0.0; m];
    let b_norm = libm::sqrt(dot(b, b));
    if b_norm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let diag = &system.diag;
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; m];
    let mut rz = dot(&r, &z);
    let mut residual = 1.0;
    let mut steps = [f64::INFINITY; SETTLE_WINDOW];
    for it in 1..=max_iter {
        system.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        if !alpha.is_finite() {
            // Search direction vanished: the iterate is as good as it gets.
            if residual <= tol {
                return Ok((x, it - 1, residual));
            }
            break;
        }
        let (mut step, mut size) = (0.0f64, 0.0f64);
        for i in 0..m {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
            step = step.max(libm::fabs(alpha * p[i]));
            size = size.max(libm::fabs(x[i]));
        }
        steps[it % SETTLE_WINDOW] = step;
        residual = libm::sqrt(dot(&r, &r)) / b_norm;
        // A small residual says little about the error when weights span
        // many orders of magnitude, so the iterate must also have stopped
        // moving over the last few updates.
        let moved: f64 = steps.iter().sum();
        if residual == 0.0 || (residual <= tol && (moved <= tol * size || it == max_iter)) {
            return Ok((x, it, residual));
        }
        if !residual.is_finite() {
            break;
        }
        for i in 0..m {
            z[i] = r[i] / diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..m {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::NotConverged { column, iterations: max_iter, residual })
}

/// Interpolated scores for every point, row-major `n × classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicSolution {
    n: usize,
    classes: usize,
    scores: Vec<f64>,
    pub stats: SolveStats,
}

impl HarmonicSolution {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.classes..(i + 1) * self.classes]
    }
}

/// Solves the system and writes template rows back verbatim.
pub fn wnll_interpolate(problem: &InterpolationProblem<'_>) -> Result<HarmonicSolution> {
    let system = assemble_system(problem)?;
    let (x, stats) = solve_cg(&system, problem.solver.tol, problem.solver.max_iter)?;
    let n = problem.graph.len();
    let classes = problem.classes;
    let mut scores = vec![0.0; n * classes];
    for (row, &t) in problem.template_ids.iter().enumerate() {
        scores[t * classes..(t + 1) * classes]
            .copy_from_slice(&problem.template_labels[row * classes..(row + 1) * classes]);
    }
    for (r, &g) in system.unknowns.iter().enumerate() {
        scores[g * classes..(g + 1) * classes].copy_from_slice(&x[r * classes..(r + 1) * classes]);
    }
    let uniform = 1.0 / classes as f64;
    for &p in &system.unreachable {
        scores[p * classes..(p + 1) * classes].fill(uniform);
    }
    Ok(HarmonicSolution { n, classes, scores, stats })
}

/// Plain harmonic extension: the same boundary problem with `μ = 0`.
pub fn harmonic_extend(
    graph: &SparseWeightGraph,
    template_ids: Vec<usize>,
    template_labels: Vec<f64>,
    classes: usize,
) -> Result<HarmonicSolution> {
    let problem = InterpolationProblem::new(graph, template_ids, template_labels, classes)?.with_mu(0.0)?;
    wnll_interpolate(&problem)
}

/// Argmax class of every row; ties resolve to the lowest class index.
pub fn predict_labels(solution: &HarmonicSolution) -> Result<LabelVector> {
    if solution.classes < 2 {
        return Err(Error::TooFewClasses(solution.classes));
    }
    let labels = (0..solution.n).map(|i| argmax(solution.row(i))).collect();
    LabelVector::new(labels, solution.classes)
}
