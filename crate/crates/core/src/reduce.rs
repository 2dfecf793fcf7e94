//! Fixed-order reductions.
//!
//! Every parallel evaluation in this crate produces one partial result per
//! element (or per row of a pair loop) and then folds the partials in index
//! order with [`pairwise_sum`]. The fold never depends on how work was split
//! across threads, so results are bit-identical for any worker count.

const BLOCK: usize = 16;

/// Sums `values` by recursive halving with a sequential base case.
///
/// The association order depends only on `values.len()`.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut acc = 0.0;
        for &v in values {
            acc += v;
        }
        return acc;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Largest absolute value, zero for an empty slice.
pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}
