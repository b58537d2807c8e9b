//! Multilinear sampling of a tensor at real-valued coordinates.

use crate::tensor::Tensor;

/// Multilinear interpolation at `point` (voxel `i` sits at coordinate `i`).
///
/// Coordinates are clamped to the grid. Corners with zero weight are never
/// read, so sampling exactly at a voxel centre returns that voxel bit for bit.
pub fn sample_multilinear(x: &Tensor, point: &[f64]) -> f64 {
    let shape = x.shape();
    let strides = x.strides();
    let d = shape.len();
    debug_assert_eq!(point.len(), d);
    let mut base = 0usize;
    let mut frac = [0.0f64; 8];
    let mut frac_vec;
    let frac: &mut [f64] = if d <= 8 {
        &mut frac[..d]
    } else {
        frac_vec = vec![0.0; d];
        &mut frac_vec
    };
    for k in 0..d {
        let last = (shape[k] - 1) as f64;
        let p = point[k].clamp(0.0, last);
        let lo = p.floor().min(last);
        base += lo as usize * strides[k];
        frac[k] = if lo == last { 0.0 } else { p - lo };
    }
    let data = x.data();
    let mut acc = 0.0;
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut offset = base;
        for k in 0..d {
            if corner >> k & 1 == 1 {
                w *= frac[k];
                offset += strides[k];
            } else {
                w *= 1.0 - frac[k];
            }
            if w == 0.0 {
                break;
            }
        }
        if w != 0.0 {
            acc += w * data[offset];
        }
    }
    acc
}
