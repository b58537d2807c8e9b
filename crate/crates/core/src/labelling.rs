//! Continuous anomaly labels from per-voxel intensity changes.
//!
//! The labeller is a flipped Gaussian, `1 - exp(-delta^2 / (2 sigma^2))`: zero
//! with zero slope for unchanged voxels, rising smoothly towards one. The
//! logistic labeller is kept as a reference; it assigns a noticeable floor
//! score to voxels that did not change at all.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Labeller width used by default, in normalised intensity units.
pub const DEFAULT_SIGMA: f64 = 0.2;

/// Largest value below one that survives a round trip through `f32`, so
/// labels stay in `[0, 1)` after being written to disk.
pub const LABEL_CEILING: f64 = 1.0 - f32::EPSILON as f64 / 2.0;

pub fn gaussian_label(delta: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("labeller sigma must be positive, got {sigma}")));
    }
    Ok(gaussian_label_unchecked(delta, sigma))
}

#[inline]
fn gaussian_label_unchecked(delta: f64, sigma: f64) -> f64 {
    let z = delta / sigma;
    (-(-0.5 * z * z).exp_m1()).min(LABEL_CEILING)
}

/// Logistic reference labeller `1 / (1 + exp(-k (delta - x0)))`.
pub fn logistic_label(delta: f64, k: f64, x0: f64) -> f64 {
    debug_assert!(k > 0.0);
    1.0 / (1.0 + (-k * (delta - x0)).exp())
}

/// Per-voxel Gaussian label of `corrupted - clean`.
pub fn label_map(clean: &Tensor, corrupted: &Tensor, sigma: f64) -> Result<Tensor> {
    gaussian_label(0.0, sigma)?;
    clean.zip_map(corrupted, |a, b| gaussian_label_unchecked(b - a, sigma))
}
