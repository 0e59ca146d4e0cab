//! Order-independent floating point reductions.
//!
//! Every statistic in this crate is a symmetric function of the per-token
//! values, so the reductions here return the same bits for any permutation
//! of their input.

/// Correctly rounded sum of `values` (Shewchuk's multi-partial algorithm).
///
/// The result is the exact real sum rounded once to the nearest `f64`, which
/// makes it independent of summation order. Inputs are expected to be finite.
pub fn exact_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials: Vec<f64> = Vec::new();
    for mut x in values {
        let mut kept = 0;
        for j in 0..partials.len() {
            let mut y = partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                partials[kept] = lo;
                kept += 1;
            }
            x = hi;
        }
        partials.truncate(kept);
        partials.push(x);
    }

    let mut n = partials.len();
    if n == 0 {
        return 0.0;
    }
    n -= 1;
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        let y_rounded = hi - x;
        lo = y - y_rounded;
        if lo != 0.0 {
            break;
        }
    }
    // Round-half-even correction when the remaining partials push the tail
    // past the halfway point.
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        let y_rounded = x - hi;
        if y == y_rounded {
            hi = x;
        }
    }
    hi
}

/// Arithmetic mean via [`exact_sum`]. Returns `None` for an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    Some(exact_sum(values.iter().copied()) / values.len() as f64)
}

/// Population standard deviation (divisor `n`).
///
/// Deviations are taken about the minimum element first, so a constant
/// sequence yields exactly `0.0` and the result does not depend on order.
pub fn population_std(values: &[f64]) -> Option<f64> {
    let pivot = values.iter().copied().reduce(f64::min)?;
    let n = values.len() as f64;
    let offset_mean = exact_sum(values.iter().map(|v| v - pivot)) / n;
    let sum_sq = exact_sum(values.iter().map(|v| {
        let d = (v - pivot) - offset_mean;
        d * d
    }));
    Some((sum_sq / n).sqrt())
}
