//! Scalar and small dense-vector helpers.
//!
//! All transcendental functions go through `libm` so results are identical
//! with and without `std`.

use alloc::vec::Vec;

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn sin_cos(x: f64) -> (f64, f64) {
    libm::sincos(x)
}

#[inline]
pub fn atan2(y: f64, x: f64) -> f64 {
    libm::atan2(y, x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn round(x: f64) -> f64 {
    libm::round(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    sqrt(dot(a, a))
}

/// Returns `v / ‖v‖`, or `None` when the norm is zero or not finite.
pub fn normalized(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        Some(v.iter().map(|x| x / n).collect())
    } else {
        None
    }
}

/// Backpropagates through `z = u / ‖u‖`: returns `(I − z zᵀ) g / ‖u‖`.
pub fn normalization_backward(u: &[f64], grad_z: &[f64]) -> Vec<f64> {
    let n = norm(u);
    let zg: f64 = u.iter().zip(grad_z).map(|(a, g)| a * g).sum::<f64>() / n;
    u.iter()
        .zip(grad_z)
        .map(|(a, g)| (g - (a / n) * zg) / n)
        .collect()
}

/// Numerically stable `log Σ exp(xᵢ)`; `-∞` for an empty iterator.
pub fn log_sum_exp<I>(values: I) -> f64
where
    I: IntoIterator<Item = f64> + Clone,
{
    let max = values
        .clone()
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.into_iter().map(|v| exp(v - max)).sum();
    max + ln(sum)
}
