use crate::{Result, SalError};

/// Nearest-rank percentile: the smallest element `t` of `values` with
/// `|{v <= t}| / n >= fraction`.
pub fn percentile_threshold(values: &[f64], fraction: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(SalError::EmptyInput("percentile values"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SalError::InvalidArgument(format!(
            "percentile fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let covers = |k: usize| k as f64 / n as f64 >= fraction;
    // ceil can land one off either side after rounding; settle on the exact predicate.
    let mut k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && covers(k - 1) {
        k -= 1;
    }
    while k < n && !covers(k) {
        k += 1;
    }
    Ok(sorted[k - 1])
}
