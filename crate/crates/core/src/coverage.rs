//! How many uniformly drawn labeled points are needed before every class has
//! been seen at least once (the coupon-collector expectation `N · H_N`).

use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::Streams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageEstimate {
    pub classes: usize,
    /// `E[X] = Σ_{i=1..N} N / (N - i + 1)`.
    pub expected_total: f64,
    /// The harmonic number `H_N`.
    pub per_class: f64,
    /// `N ln N`.
    pub asymptotic: f64,
}

/// Exact expectation, with `H_N` summed from its smallest term upward.
pub fn expected_samples(classes: usize) -> Result<CoverageEstimate> {
    if classes == 0 {
        return Err(Error::InvalidParameter { name: "classes", reason: "must be at least 1" });
    }
    let per_class: f64 = (1..=classes).rev().map(|i| 1.0 / i as f64).sum();
    let n = classes as f64;
    Ok(CoverageEstimate { classes, expected_total: n * per_class, per_class, asymptotic: n * libm::log(n) })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageSimulation {
    pub classes: usize,
    pub trials: usize,
    pub mean: f64,
    pub std_error: f64,
}

/// Monte-Carlo mean of the number of uniform class draws until all classes
/// appear. Trial `t` draws from its own stream, so results do not depend on
/// evaluation order.
pub fn simulate_coverage(classes: usize, trials: usize, seed: u64) -> Result<CoverageSimulation> {
    if classes == 0 {
        return Err(Error::InvalidParameter { name: "classes", reason: "must be at least 1" });
    }
    run_trials(classes, trials, seed, |rng| rng.random_range(0..classes))
}

/// [`simulate_coverage`] with classes drawn from `probabilities` instead of
/// uniformly. The closed form does not apply to non-uniform pools.
pub fn simulate_coverage_weighted(probabilities: &[f64], trials: usize, seed: u64) -> Result<CoverageSimulation> {
    if probabilities.is_empty() || probabilities.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
        return Err(Error::InvalidParameter { name: "probabilities", reason: "must be positive and finite" });
    }
    let dist = WeightedIndex::new(probabilities)
        .map_err(|_| Error::InvalidParameter { name: "probabilities", reason: "not a valid weight vector" })?;
    run_trials(probabilities.len(), trials, seed, |rng| dist.sample(rng))
}

fn run_trials(
    classes: usize,
    trials: usize,
    seed: u64,
    mut draw: impl FnMut(&mut crate::rng::StreamRng) -> usize,
) -> Result<CoverageSimulation> {
    if trials == 0 {
        return Err(Error::InvalidParameter { name: "trials", reason: "must be at least 1" });
    }
    let streams = Streams::new(seed);
    let mut seen: Vec<bool> = alloc::vec![false; classes];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for t in 0..trials {
        let mut rng = streams.indexed("simulation", t as u64);
        seen.fill(false);
        let mut missing = classes;
        let mut draws = 0u64;
        while missing > 0 {
            let c = draw(&mut rng);
            draws += 1;
            if !seen[c] {
                seen[c] = true;
                missing -= 1;
            }
        }
        let x = draws as f64;
        sum += x;
        sum_sq += x * x;
    }
    let n = trials as f64;
    let mean = sum / n;
    let std_error = if trials > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        libm::sqrt(var / n)
    } else {
        0.0
    };
    Ok(CoverageSimulation { classes, trials, mean, std_error })
}

/// `ceil(safety_factor · N · H_N)`.
pub fn recommend_template_size(classes: usize, safety_factor: f64) -> Result<usize> {
    if !(safety_factor.is_finite() && safety_factor >= 1.0) {
        return Err(Error::InvalidParameter { name: "safety_factor", reason: "must be at least 1" });
    }
    let estimate = expected_samples(classes)?;
    Ok(libm::ceil(safety_factor * estimate.expected_total) as usize)
}
