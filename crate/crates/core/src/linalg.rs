//! Dense kernels with a fixed summation order.

/// Squared Euclidean distance. Four interleaved partial sums, combined in a
/// fixed order, so the result depends only on the two slices.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        for lane in 0..4 {
            let d = a[i + lane] - b[i + lane];
            acc[lane] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + tail
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out[r][o] = bias[o] + Σ_i input[r][i] · weight[o][i]` for a row-major
/// `rows × inputs` input and an `outputs × inputs` weight.
pub(crate) fn affine_rows(input: &[f64], rows: usize, weight: &[f64], bias: &[f64], out: &mut [f64]) {
    let outputs = bias.len();
    let inputs = weight.len() / outputs;
    for r in 0..rows {
        let x = &input[r * inputs..(r + 1) * inputs];
        for o in 0..outputs {
            out[r * outputs + o] = bias[o] + dot(x, &weight[o * inputs..(o + 1) * inputs]);
        }
    }
}

/// Numerically stable `log Σ exp(z)`.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(z.iter().map(|&v| libm::exp(v - max)).sum::<f64>())
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
