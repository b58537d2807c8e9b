//! Seamless blending by a Dirichlet Poisson solve over an axis-aligned box.
//!
//! The unknown region is the mask's bounding box (kept one voxel away from
//! the image border); the one-voxel shell around it carries the destination
//! values as Dirichlet data. The guidance field is the source's forward
//! difference gradient, so its divergence is the source's discrete
//! Laplacian. The discrete Laplacian with zero Dirichlet data is diagonal in
//! the DST-I basis with eigenvalues `-(2 - 2cos(pi (u+1) / (N+1)))` per axis,
//! which turns the solve into a coefficientwise division.

use crate::dst::{dst1_forward_all, dst1_inverse_all};
use crate::error::{Error, Result};
use crate::mask::AnomalyMask;
use crate::tensor::{for_each_index, BoundingBox, Tensor};

/// Forward differences `g_d[n] = x[n + e_d] - x[n]`, zero on the last slice of
/// each axis.
pub fn gradient(x: &Tensor) -> Vec<Tensor> {
    let shape = x.shape();
    let strides = x.strides();
    let src = x.data();
    (0..x.ndim())
        .map(|d| {
            let mut g = vec![0.0; src.len()];
            for (k, out) in g.iter_mut().enumerate() {
                let coord = (k / strides[d]) % shape[d];
                if coord + 1 < shape[d] {
                    *out = src[k + strides[d]] - src[k];
                }
            }
            Tensor::from_shape_vec(shape, g).expect("same shape")
        })
        .collect()
}

/// Backward-difference divergence `sum_d v_d[n] - v_d[n - e_d]`, with
/// `v_d[-1] = 0`.
pub fn divergence(v: &[Tensor]) -> Result<Tensor> {
    let first = v
        .first()
        .ok_or_else(|| Error::invalid("divergence of an empty field"))?;
    if v.len() != first.ndim() {
        return Err(Error::invalid(format!(
            "{} components for a {}-d field",
            v.len(),
            first.ndim()
        )));
    }
    for c in v {
        first.require_same_shape(c)?;
    }
    let shape = first.shape();
    let strides = first.strides();
    let mut out = vec![0.0; first.len()];
    for (d, comp) in v.iter().enumerate() {
        let data = comp.data();
        for (k, o) in out.iter_mut().enumerate() {
            let coord = (k / strides[d]) % shape[d];
            *o += data[k];
            if coord > 0 {
                *o -= data[k - strides[d]];
            }
        }
    }
    Tensor::new(shape, out)
}

/// 2D+1 point discrete Laplacian evaluated at the interior voxels of `x`
/// (output extents are `x`'s minus two).
pub fn interior_laplacian(x: &Tensor) -> Result<Tensor> {
    if x.shape().iter().any(|&n| n < 3) {
        return Err(Error::invalid(format!(
            "shape {:?} has no interior",
            x.shape()
        )));
    }
    let inner: Vec<usize> = x.shape().iter().map(|n| n - 2).collect();
    let strides = x.strides();
    let data = x.data();
    let mut out = Vec::with_capacity(inner.iter().product());
    for_each_index(&inner, |m| {
        let k: usize = m.iter().zip(&strides).map(|(i, s)| (i + 1) * s).sum();
        let mut acc = 0.0;
        for s in &strides {
            acc += data[k + s] + data[k - s] - 2.0 * data[k];
        }
        out.push(acc);
    });
    Tensor::from_shape_vec(&inner, out)
}

/// Eigenvalue magnitude of the 1-D second difference with zero Dirichlet
/// ends, mode `u` on `n` points: `2 - 2cos(pi (u+1)/(n+1))`.
pub fn dirichlet_eigenvalue(u: usize, n: usize) -> f64 {
    let s = (std::f64::consts::PI * (u + 1) as f64 / (2.0 * (n + 1) as f64)).sin();
    4.0 * s * s
}

/// Solve `Laplacian(f) = rhs` on the interior, with `frame` supplying the
/// Dirichlet values on its outer shell.
///
/// `frame` has `rhs`'s extents plus two on every axis; only its face voxels
/// are read.
pub fn solve_poisson_dirichlet(rhs: &Tensor, frame: &Tensor) -> Result<Tensor> {
    let shape = rhs.shape();
    if frame.ndim() != rhs.ndim() || frame.shape().iter().zip(shape).any(|(f, r)| *f != r + 2) {
        return Err(Error::invalid(format!(
            "boundary frame {:?} does not enclose interior {:?}",
            frame.shape(),
            shape
        )));
    }
    let fstrides = frame.strides();
    let fdata = frame.data();
    let mut folded = rhs.clone();
    {
        let out = folded.data_mut();
        let mut k = 0;
        for_each_index(shape, |m| {
            let centre: usize = m.iter().zip(&fstrides).map(|(i, s)| (i + 1) * s).sum();
            for d in 0..m.len() {
                if m[d] == 0 {
                    out[k] -= fdata[centre - fstrides[d]];
                }
                if m[d] + 1 == shape[d] {
                    out[k] -= fdata[centre + fstrides[d]];
                }
            }
            k += 1;
        });
    }

    let eig: Vec<Vec<f64>> = shape
        .iter()
        .map(|&n| (0..n).map(|u| dirichlet_eigenvalue(u, n)).collect())
        .collect();
    let mut coeffs = dst1_forward_all(&folded);
    {
        let data = coeffs.data_mut();
        let mut k = 0;
        for_each_index(shape, |u| {
            let denom: f64 = u.iter().enumerate().map(|(d, &ud)| eig[d][ud]).sum();
            data[k] /= -denom;
            k += 1;
        });
    }
    let solution = dst1_inverse_all(&coeffs);
    solution.check_finite()?;
    Ok(solution)
}

/// One blend instance: the unknown box, Dirichlet data around it and the
/// guidance gradient it should reproduce.
#[derive(Clone, Debug)]
pub struct GuidedPatchProblem {
    /// Unknown region in destination coordinates.
    pub region: BoundingBox,
    /// Destination values on `region` grown by one voxel.
    pub frame: Tensor,
    /// Forward-difference gradient of the source over the same grown box.
    /// Its divergence at the interior voxels is the source Laplacian.
    pub guidance: Vec<Tensor>,
}

impl GuidedPatchProblem {
    /// Build the problem for `region` of `dest`, taking guidance from `src`
    /// at `region` shifted by `src_offset`.
    pub fn from_images(
        dest: &Tensor,
        src: &Tensor,
        region: &BoundingBox,
        src_offset: &[isize],
    ) -> Result<Self> {
        if src.ndim() != dest.ndim() || src_offset.len() != dest.ndim() || region.ndim() != dest.ndim() {
            return Err(Error::invalid("blend inputs differ in dimensionality"));
        }
        if region.is_empty() {
            return Err(Error::invalid("empty blend region"));
        }
        let dest_box = region.grow_within(1, dest.shape()).ok_or_else(|| {
            Error::invalid(format!(
                "region {region:?} plus boundary shell leaves destination {:?}",
                dest.shape()
            ))
        })?;
        let src_box = dest_box
            .translate(src_offset)
            .filter(|b| src.full_box().contains_box(b))
            .ok_or_else(|| {
                Error::invalid(format!(
                    "source box {dest_box:?} offset by {src_offset:?} leaves source {:?}",
                    src.shape()
                ))
            })?;
        let frame = dest.extract(&dest_box)?;
        let guidance = gradient(&src.extract(&src_box)?);
        Ok(Self {
            region: region.clone(),
            frame,
            guidance,
        })
    }

    /// Divergence of the guidance at the unknown voxels.
    pub fn rhs(&self) -> Result<Tensor> {
        let div = divergence(&self.guidance)?;
        let inner = BoundingBox::from_origin(&vec![1; div.ndim()], &self.region.extents());
        div.extract(&inner)
    }

    pub fn solve(&self) -> Result<Tensor> {
        solve_poisson_dirichlet(&self.rhs()?, &self.frame)
    }
}

/// Region actually solved for a mask: its bounding box, pulled in so the
/// boundary shell stays inside the image. Empty when nothing can change.
pub fn blend_region(mask: &AnomalyMask, shape: &[usize]) -> BoundingBox {
    mask.bbox.shrink_to_interior(shape, 1)
}

/// Seamlessly blend `src` into `dest` over the bounding box of `mask`.
///
/// Voxels outside the box are copied from `dest` unchanged. `src_offset` maps
/// destination coordinates to source coordinates.
pub fn poisson_blend(dest: &Tensor, src: &Tensor, mask: &AnomalyMask, src_offset: &[isize]) -> Result<Tensor> {
    if mask.raster.shape() != dest.shape() {
        return Err(Error::invalid(format!(
            "mask raster {:?} does not match destination {:?}",
            mask.raster.shape(),
            dest.shape()
        )));
    }
    if src.ndim() != dest.ndim() || src_offset.len() != dest.ndim() {
        return Err(Error::invalid("blend inputs differ in dimensionality"));
    }
    if !mask.is_empty() && !dest.full_box().contains_box(&mask.bbox) {
        return Err(Error::invalid(format!("mask box {:?} outside destination", mask.bbox)));
    }
    let region = blend_region(mask, dest.shape());
    if mask.is_empty() || region.is_empty() {
        return Ok(dest.clone());
    }
    let problem = GuidedPatchProblem::from_images(dest, src, &region, src_offset)?;
    let patch = problem.solve()?;
    let mut out = dest.clone();
    out.paste(&patch, &region.lo)?;
    Ok(out)
}
