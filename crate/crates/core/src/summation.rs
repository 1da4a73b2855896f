//! Order-fixed summation helpers used by every estimator reduction.

const BLOCK: usize = 32;

/// Pairwise summation. Error grows like O(log n) instead of O(n), and the
/// association order depends only on the slice length.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    pairwise_sum(values) / values.len() as f64
}

/// Unbiased sample variance computed in two passes around the pairwise mean.
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    pairwise_sum(&dev) / (n - 1) as f64
}

/// Mean and unbiased variance in one call.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    (mean(values), sample_variance(values))
}
