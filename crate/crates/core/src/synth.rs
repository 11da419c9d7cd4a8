//! Seeded synthetic point clouds for tests and demos.

use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::data::{DataMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::rng::Streams;

/// Two interleaving half circles in the plane, `n / 2` points each (the outer
/// moon gets the odd point), with isotropic Gaussian noise of std `noise`.
/// Labels alternate in the output order.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<(DataMatrix, LabelVector)> {
    if n < 2 {
        return Err(Error::InvalidParameter { name: "n", reason: "need at least two points" });
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::InvalidParameter { name: "noise", reason: "must be finite and non-negative" });
    }
    let mut rng = Streams::new(seed).stream("synth");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let outer = n.div_ceil(2);
    let inner = n / 2;
    let angle = |i: usize, count: usize| {
        if count > 1 {
            core::f64::consts::PI * i as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut values = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let (mut a, mut b) = (0, 0);
    for p in 0..n {
        let (x, y, label) = if (p % 2 == 0 && a < outer) || b >= inner {
            let t = angle(a, outer);
            a += 1;
            (libm::cos(t), libm::sin(t), 0)
        } else {
            let t = angle(b, inner);
            b += 1;
            (1.0 - libm::cos(t), 0.5 - libm::sin(t), 1)
        };
        values.push(x + noise * normal.sample(&mut rng));
        values.push(y + noise * normal.sample(&mut rng));
        labels.push(label);
    }
    Ok((DataMatrix::new(n, 2, values)?, LabelVector::new(labels, 2)?))
}

/// `per_class` points around each center with isotropic std `std`, classes
/// interleaved in the output order.
pub fn gaussian_blobs(centers: &[&[f64]], per_class: usize, std: f64, seed: u64) -> Result<(DataMatrix, LabelVector)> {
    if centers.is_empty() || per_class == 0 {
        return Err(Error::Empty("blob centers or points"));
    }
    let dim = centers[0].len();
    if let Some(c) = centers.iter().find(|c| c.len() != dim) {
        return Err(Error::ShapeMismatch { what: "center dimension", expected: dim, found: c.len() });
    }
    if !(std.is_finite() && std >= 0.0) {
        return Err(Error::InvalidParameter { name: "std", reason: "must be finite and non-negative" });
    }
    let mut rng = Streams::new(seed).stream("synth");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = centers.len() * per_class;
    let mut values = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..per_class {
        for (class, center) in centers.iter().enumerate() {
            values.extend(center.iter().map(|&c| c + std * normal.sample(&mut rng)));
            labels.push(class);
        }
    }
    Ok((DataMatrix::new(n, dim, values)?, LabelVector::new(labels, centers.len().max(2))?))
}
