//! Small summation helpers shared across modules.

/// Neumaier-compensated sum, in the order given.
pub(crate) fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated sum that depends only on the multiset of values.
pub(crate) fn order_free_sum(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    compensated_sum(sorted)
}

/// Mean computed as `x0 + mean(x - x0)`; returns `x0` exactly on constant input.
pub(crate) fn shifted_mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let x0 = values[0];
    let dev = compensated_sum(values.iter().map(|&v| v - x0));
    x0 + dev / values.len() as f64
}

/// Arithmetic mean in index order (fixed-order reduction).
pub(crate) fn mean(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    compensated_sum(values.iter().copied()) / values.len() as f64
}

pub(crate) fn median(values: &[f64]) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len();
    if m % 2 == 1 {
        sorted[m / 2]
    } else {
        0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
    }
}
