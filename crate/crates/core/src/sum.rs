//! Order-independent summation.

/// Pairwise sum of `values` after sorting them by total order.
///
/// The result depends only on the multiset of inputs, so it is invariant
/// under permutation of the paths and under any change of thread count.
pub(crate) fn stable_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    pairwise(values)
}

pub(crate) fn stable_mean(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let n = values.len() as f64;
    stable_sum(values) / n
}

fn pairwise(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise(&values[..mid]) + pairwise(&values[mid..])
}
