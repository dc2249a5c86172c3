//! Sparse storage, banded direct solves and a few dense helpers.

mod banded;
mod sparse;

pub use banded::{BandedLu, Ordering};
pub use sparse::CsrMatrix;

use num_complex::Complex64;

pub(crate) fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Weighted inner product `sum_i w_i a_i conj(b_i)`.
pub fn weighted_dot(w: &[f64], a: &[Complex64], b: &[Complex64]) -> Complex64 {
    w.iter().zip(a).zip(b).map(|((&w, &a), &b)| a * b.conj() * w).sum()
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}
