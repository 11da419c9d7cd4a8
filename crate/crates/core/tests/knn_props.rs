use proptest::prelude::*;
use wnll_core::knn::{build_graph, estimate_sigma, knn_with, GraphParams, KnnMethod};
use wnll_core::DataMatrix;

/// Sort every other point by (squared distance, index) and keep the first k.
fn reference_knn(data: &DataMatrix, k: usize) -> Vec<Vec<(usize, f64)>> {
    (0..data.rows())
        .map(|i| {
            let mut all: Vec<(usize, f64)> = (0..data.rows())
                .filter(|&j| j != i)
                .map(|j| {
                    let d: f64 = data.row(i).iter().zip(data.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (j, d)
                })
                .collect();
            all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            all.truncate(k);
            all
        })
        .collect()
}

fn points(max_n: usize, max_d: usize, grid: bool) -> impl Strategy<Value = DataMatrix> {
    (2..=max_n, 1..=max_d).prop_flat_map(move |(n, d)| {
        let coord = if grid { (0i32..4).prop_map(f64::from).boxed() } else { (-10.0f64..10.0).boxed() };
        prop::collection::vec(coord, n * d).prop_map(move |v| DataMatrix::new(n, d, v).unwrap())
    })
}

fn check_against_reference(data: &DataMatrix, k: usize) -> Result<(), TestCaseError> {
    let expected = reference_knn(data, k);
    for method in [KnnMethod::BruteForce, KnnMethod::KdTree] {
        let got = knn_with(data, k, method).unwrap();
        let eff = got.k();
        prop_assert_eq!(eff, k.min(data.rows() - 1));
        for (i, exp) in expected.iter().enumerate() {
            let idx: Vec<usize> = exp.iter().map(|e| e.0).collect();
            prop_assert_eq!(got.neighbors(i), &idx[..eff], "method {:?} point {}", method, i);
            for (a, b) in got.sq_dists(i).iter().zip(exp) {
                prop_assert!((a - b.1).abs() <= 1e-12 * b.1.max(1.0));
            }
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn large_clouds_agree_with_sorting(data in points(1000, 4, false), k in 10usize..20) {
        check_against_reference(&data, k)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn search_strategies_agree_with_sorting(data in points(60, 6, false), k in 1usize..20) {
        check_against_reference(&data, k)?;
    }

    #[test]
    fn ties_on_integer_grids_resolve_by_index(data in points(50, 3, true), k in 1usize..12) {
        check_against_reference(&data, k)?;
    }

    #[test]
    fn weights_lie_in_unit_interval(data in points(40, 4, false)) {
        let g = build_graph(&data, GraphParams { k: 6, r: 3, method: KnnMethod::Auto }).unwrap();
        for i in 0..g.len() {
            for (_, w) in g.edges(i) {
                prop_assert!(w > 0.0 && w <= 1.0);
            }
        }
    }

    #[test]
    fn weights_are_scale_invariant(data in points(40, 3, false), scale in 0.01f64..100.0) {
        let params = GraphParams { k: 5, r: 3, method: KnnMethod::Auto };
        let base = build_graph(&data, params).unwrap();
        let scaled = build_graph(&data.scaled(scale).unwrap(), params).unwrap();
        for i in 0..base.len() {
            for ((j, w), (j2, w2)) in base.edges(i).zip(scaled.edges(i)) {
                prop_assert_eq!(j, j2);
                prop_assert!((w - w2).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn sigma_is_distance_to_rank_neighbor() {
    let data = DataMatrix::new(4, 1, vec![0.0, 1.0, 3.0, 7.0]).unwrap();
    let nl = knn_with(&data, 3, KnnMethod::BruteForce).unwrap();
    assert_eq!(estimate_sigma(&nl, 2).unwrap(), vec![3.0, 2.0, 3.0, 6.0]);
    assert!(estimate_sigma(&nl, 4).is_err());
}

#[test]
fn mnist_sized_dimension_uses_brute_force_consistently() {
    let values: Vec<f64> = (0..200 * 20).map(|i| ((i * 7919) % 101) as f64 / 101.0).collect();
    let data = DataMatrix::new(200, 20, values).unwrap();
    let a = knn_with(&data, 15, KnnMethod::Auto).unwrap();
    let b = knn_with(&data, 15, KnnMethod::KdTree).unwrap();
    assert_eq!(a, b);
}
