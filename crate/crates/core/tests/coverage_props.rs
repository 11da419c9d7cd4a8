use wnll_core::coverage::{expected_samples, simulate_coverage};

#[test]
fn monte_carlo_within_three_standard_errors() {
    for (i, n) in [2usize, 3, 5, 10, 26].into_iter().enumerate() {
        let exact = expected_samples(n).unwrap().expected_total;
        let sim = simulate_coverage(n, 20_000, 100 + i as u64).unwrap();
        assert!((sim.mean - exact).abs() <= 3.0 * sim.std_error, "N={n}: {} vs {exact} (se {})", sim.mean, sim.std_error);
    }
}

#[test]
fn expectation_increases_with_class_count() {
    let mut last = 0.0;
    for n in 1..500 {
        let e = expected_samples(n).unwrap();
        assert!(e.expected_total > last);
        assert!(e.expected_total >= n as f64);
        last = e.expected_total;
    }
}

#[test]
fn asymptote_ratio_approaches_one_from_below() {
    let mut last = 0.0;
    for n in (100..=10_000).step_by(100) {
        let e = expected_samples(n).unwrap();
        let ratio = e.asymptotic / e.expected_total;
        assert!(ratio > 0.8 && ratio < 1.0, "N={n}: {ratio}");
        assert!(ratio > last);
        last = ratio;
    }
}

#[test]
fn harmonic_sum_matches_rational_evaluation() {
    // H_26 as an exact fraction: numerator and denominator fit in u128.
    let (mut num, mut den) = (0u128, 1u128);
    fn gcd(a: u128, b: u128) -> u128 {
        if b == 0 { a } else { gcd(b, a % b) }
    }
    for i in 1..=26u128 {
        num = num * i + den;
        den *= i;
        let g = gcd(num, den);
        num /= g;
        den /= g;
    }
    let exact = 26.0 * num as f64 / den as f64;
    assert!((expected_samples(26).unwrap().expected_total - exact).abs() < 1e-12);
    assert!((exact - 100.21).abs() < 0.01);
}
