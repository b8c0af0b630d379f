//! Order statistics used by the verifiers and their calibrations.
//!
//! Quantiles use linear interpolation between closest ranks: for sorted values
//! `v[0..n]` the `q`-quantile sits at fractional rank `q * (n - 1)`.

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("quantile of an empty sample")]
    Empty,
    #[error("quantile level {0} outside [0, 1]")]
    Level(f64),
    #[error("sample contains a non-finite value")]
    NonFinite,
}

/// Quantile of an unsorted sample. The input is copied and sorted.
pub fn quantile<T: Scalar>(values: &[T], q: f64) -> Result<T, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::Level(q));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(quantile_sorted(&sorted, q))
}

/// Quantile of an already ascending-sorted, non-empty sample.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let rank = q * (n - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    if lo == hi {
        return sorted[lo];
    }
    let frac = T::lit(rank - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn median<T: Scalar>(values: &[T]) -> Result<T, StatsError> {
    quantile(values, 0.5)
}

pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len()))
    }
}
