//! Dense vector and matrix helpers plus the seeded random stream.
//!
//! Vectors are plain `[f64]` slices. Dimensions in this crate stay in the low
//! hundreds, so everything here is unblocked and allocation-light rather than
//! fast.

mod mat;
mod qr;
mod rng;

pub use mat::Mat;
pub use qr::{column_space_basis, least_squares_min_norm, random_orthogonal, LeastSquares, MinNormSolver};
pub use rng::{Rng, ALGORITHM as RNG_ALGORITHM};

use crate::error::{Error, Result};

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Dimension { expected, found })
    }
}

/// Inner product with a dimension check.
pub fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    check_dims(a.len(), b.len())?;
    Ok(inner(a, b))
}

/// Inner product of equal-length slices (checked only in debug builds).
#[inline]
pub(crate) fn inner(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    inner(a, a).sqrt()
}

#[inline]
pub(crate) fn norm2_sq(a: &[f64]) -> f64 {
    inner(a, a)
}

/// `a - b`.
pub fn sub(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    check_dims(a.len(), b.len())?;
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

pub fn scaled(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `y += alpha * x`.
#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|x| x.is_finite())
}
