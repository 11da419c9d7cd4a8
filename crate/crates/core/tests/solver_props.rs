use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wnll_core::knn::{build_graph, GraphParams, KnnMethod};
use wnll_core::solver::{check_connectivity, harmonic_extend, predict_labels, wnll_interpolate};
use wnll_core::{DataMatrix, InterpolationProblem, LabelVector, SparseWeightGraph};

/// Writes the WNLL equations out densely from their definition and solves
/// them by Gaussian elimination with partial pivoting.
fn dense_wnll(graph: &SparseWeightGraph, template: &[usize], g: &[f64], classes: usize, mu: f64) -> Vec<f64> {
    let n = graph.len();
    let mut w = vec![0.0; n * n];
    for i in 0..n {
        for (j, wij) in graph.edges(i) {
            w[i * n + j] = wij;
        }
    }
    let mut label_row = vec![None; n];
    for (r, &t) in template.iter().enumerate() {
        label_row[t] = Some(r);
    }
    let unknowns: Vec<usize> = (0..n).filter(|&i| label_row[i].is_none()).collect();
    let m = unknowns.len();
    let mut pos = vec![usize::MAX; n];
    for (p, &u) in unknowns.iter().enumerate() {
        pos[u] = p;
    }
    let mut a = vec![0.0; m * m];
    let mut b = vec![0.0; m * classes];
    for (p, &x) in unknowns.iter().enumerate() {
        for y in 0..n {
            let sym = w[x * n + y] + w[y * n + x];
            let coef = sym + if label_row[y].is_some() { mu * w[y * n + x] } else { 0.0 };
            if coef == 0.0 {
                continue;
            }
            a[p * m + p] += coef;
            match label_row[y] {
                Some(r) => {
                    for c in 0..classes {
                        b[p * classes + c] += coef * g[r * classes + c];
                    }
                }
                None => a[p * m + pos[y]] -= coef,
            }
        }
    }
    // Forward elimination on [A | B].
    for col in 0..m {
        let pivot = (col..m).max_by(|&i, &j| a[i * m + col].abs().total_cmp(&a[j * m + col].abs())).unwrap();
        if pivot != col {
            for k in 0..m {
                a.swap(col * m + k, pivot * m + k);
            }
            for c in 0..classes {
                b.swap(col * classes + c, pivot * classes + c);
            }
        }
        let d = a[col * m + col];
        for row in col + 1..m {
            let f = a[row * m + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..m {
                a[row * m + k] -= f * a[col * m + k];
            }
            for c in 0..classes {
                b[row * classes + c] -= f * b[col * classes + c];
            }
        }
    }
    let mut x = vec![0.0; m * classes];
    for row in (0..m).rev() {
        for c in 0..classes {
            let mut s = b[row * classes + c];
            for k in row + 1..m {
                s -= a[row * m + k] * x[k * classes + c];
            }
            x[row * classes + c] = s / a[row * m + row];
        }
    }
    let mut full = vec![0.0; n * classes];
    for (r, &t) in template.iter().enumerate() {
        full[t * classes..(t + 1) * classes].copy_from_slice(&g[r * classes..(r + 1) * classes]);
    }
    for (p, &u) in unknowns.iter().enumerate() {
        full[u * classes..(u + 1) * classes].copy_from_slice(&x[p * classes..(p + 1) * classes]);
    }
    full
}

struct Instance {
    graph: SparseWeightGraph,
    template: Vec<usize>,
    labels: LabelVector,
}

/// Smallest weight that counts towards connectivity. Components joined only by
/// weaker edges make the system numerically singular.
const LINK_WEIGHT: f64 = 1e-6;

fn numerically_covered(graph: &SparseWeightGraph, template: &[usize]) -> bool {
    let mut strong = Vec::new();
    for i in 0..graph.len() {
        strong.extend(graph.edges(i).filter(|e| e.1 >= LINK_WEIGHT).map(|(j, w)| (i, j, w)));
    }
    let strong = SparseWeightGraph::from_edges(graph.len(), &strong).unwrap();
    check_connectivity(&strong, template).is_covered()
}

/// Random points, kNN graph and template, redrawn until every component of
/// the graph restricted to edges of weight at least `LINK_WEIGHT` holds a
/// template point.
fn random_instance(seed: u64, max_n: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rng.random_range(4..=max_n);
        let d = rng.random_range(1..=5);
        let classes = rng.random_range(2..=10usize.min(n - 1));
        let values: Vec<f64> = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let data = DataMatrix::new(n, d, values).unwrap();
        let k = rng.random_range(2..=15usize.min(n - 1));
        let r = rng.random_range(1..=k);
        let graph = build_graph(&data, GraphParams { k, r, method: KnnMethod::Auto }).unwrap();
        let t = rng.random_range(classes..n);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut template = order[..t].to_vec();
        template.sort_unstable();
        let labels: Vec<usize> = (0..t).map(|i| if i < classes { i } else { rng.random_range(0..classes) }).collect();
        if numerically_covered(&graph, &template) {
            return Instance { graph, template, labels: LabelVector::new(labels, classes).unwrap() };
        }
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cg_matches_dense_elimination(seed in any::<u64>(), mu in 0.0f64..10.0) {
        let inst = random_instance(seed, 100);
        let problem = InterpolationProblem::from_labels(&inst.graph, inst.template.clone(), &inst.labels)
            .unwrap()
            .with_mu(mu)
            .unwrap();
        let sol = wnll_interpolate(&problem).unwrap();
        let oracle = dense_wnll(&inst.graph, &inst.template, &inst.labels.one_hot(), inst.labels.classes(), mu);
        prop_assert!(max_abs_diff(sol.scores(), &oracle) <= 1e-8);
    }

    #[test]
    fn maximum_principle_and_exact_boundary(seed in any::<u64>()) {
        let inst = random_instance(seed, 60);
        let problem = InterpolationProblem::from_labels(&inst.graph, inst.template.clone(), &inst.labels).unwrap();
        let sol = wnll_interpolate(&problem).unwrap();
        for &v in sol.scores() {
            prop_assert!((-1e-10..=1.0 + 1e-10).contains(&v));
        }
        let g = inst.labels.one_hot();
        let c = inst.labels.classes();
        for (r, &t) in inst.template.iter().enumerate() {
            prop_assert_eq!(sol.row(t), &g[r * c..(r + 1) * c]);
        }
    }

    #[test]
    fn rows_sum_to_one(seed in any::<u64>()) {
        let inst = random_instance(seed, 60);
        let problem = InterpolationProblem::from_labels(&inst.graph, inst.template.clone(), &inst.labels).unwrap();
        let sol = wnll_interpolate(&problem).unwrap();
        for i in 0..sol.len() {
            prop_assert!((sol.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_mu_is_harmonic_extension(seed in any::<u64>()) {
        let inst = random_instance(seed, 60);
        let g = inst.labels.one_hot();
        let c = inst.labels.classes();
        let wnll = InterpolationProblem::new(&inst.graph, inst.template.clone(), g.clone(), c)
            .unwrap()
            .with_mu(0.0)
            .unwrap();
        let a = wnll_interpolate(&wnll).unwrap();
        let b = harmonic_extend(&inst.graph, inst.template.clone(), g.clone(), c).unwrap();
        prop_assert!(max_abs_diff(a.scores(), b.scores()) <= 1e-12);
        let oracle = dense_wnll(&inst.graph, &inst.template, &g, c, 0.0);
        prop_assert!(max_abs_diff(b.scores(), &oracle) <= 1e-8);
    }

    #[test]
    fn relabeling_points_permutes_the_solution(seed in any::<u64>()) {
        let inst = random_instance(seed, 50);
        let n = inst.graph.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let mut edges = Vec::new();
        for i in 0..n {
            for (j, w) in inst.graph.edges(i) {
                edges.push((perm[i], perm[j], w));
            }
        }
        let permuted = SparseWeightGraph::from_edges(n, &edges).unwrap();
        let template: Vec<usize> = inst.template.iter().map(|&t| perm[t]).collect();
        let base = wnll_interpolate(&InterpolationProblem::from_labels(&inst.graph, inst.template.clone(), &inst.labels).unwrap()).unwrap();
        let moved = wnll_interpolate(&InterpolationProblem::from_labels(&permuted, template, &inst.labels).unwrap()).unwrap();
        for i in 0..n {
            prop_assert!(max_abs_diff(base.row(i), moved.row(perm[i])) <= 1e-12);
        }
        let pa = predict_labels(&base).unwrap();
        let pb = predict_labels(&moved).unwrap();
        for i in 0..n {
            let gap = {
                let mut r = base.row(i).to_vec();
                r.sort_by(|a, b| b.total_cmp(a));
                r[0] - r[1]
            };
            if gap > 1e-6 {
                prop_assert_eq!(pa.get(i), pb.get(perm[i]));
            }
        }
    }
}


/// Many instances have `r = 1` and weights spanning hundreds of orders of
/// magnitude, where a small residual alone leaves errors far above 1e-8.
#[test]
fn cg_stays_accurate_on_badly_scaled_instances() {
    let mut worst = 0.0f64;
    for seed in 0..600u64 {
        let inst = random_instance(seed, 100);
        let mu = (seed % 10) as f64;
        let problem = InterpolationProblem::from_labels(&inst.graph, inst.template.clone(), &inst.labels)
            .unwrap()
            .with_mu(mu)
            .unwrap();
        let sol = wnll_interpolate(&problem).unwrap();
        let oracle = dense_wnll(&inst.graph, &inst.template, &inst.labels.one_hot(), inst.labels.classes(), mu);
        worst = worst.max(max_abs_diff(sol.scores(), &oracle));
    }
    assert!(worst <= 1e-8, "max deviation from the dense solve {worst:e}");
}
