//! Anomaly mask geometry: parametric ellipsoids and cuboids, their voxel
//! rasterisation, and randomised placement against an image foreground.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{for_each_index, BoundingBox, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    Ellipsoid,
    Cuboid,
}

/// Parametric mask shape in voxel coordinates (voxel `i` has its centre at `i`).
///
/// `rotation` holds one Givens angle per axis pair `(i, j)`, `i < j`, in
/// lexicographic order; the pair rotations are composed left to right.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
    pub rotation: Vec<f64>,
}

/// Relative tolerance on the surface test, so that points exactly on the
/// surface stay inside under rotation round-off.
const BOUNDARY_SLACK: f64 = 1e-9;

pub fn rotation_pairs(ndim: usize) -> usize {
    ndim * ndim.saturating_sub(1) / 2
}

impl MaskSpec {
    pub fn new(kind: MaskKind, center: Vec<f64>, semi_axes: Vec<f64>, rotation: Vec<f64>) -> Result<Self> {
        let spec = Self {
            kind,
            center,
            semi_axes,
            rotation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Axis-aligned spec (all rotation angles zero).
    pub fn axis_aligned(kind: MaskKind, center: Vec<f64>, semi_axes: Vec<f64>) -> Result<Self> {
        let n = rotation_pairs(center.len());
        Self::new(kind, center, semi_axes, vec![0.0; n])
    }

    pub fn ndim(&self) -> usize {
        self.center.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.center.len();
        if d == 0 || self.semi_axes.len() != d || self.rotation.len() != rotation_pairs(d) {
            return Err(Error::invalid(format!(
                "mask spec dimensions inconsistent: center {}, semi_axes {}, rotation {}",
                d,
                self.semi_axes.len(),
                self.rotation.len()
            )));
        }
        if self.semi_axes.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
            return Err(Error::invalid("semi-axes must be positive and finite"));
        }
        if self.center.iter().chain(&self.rotation).any(|v| !v.is_finite()) {
            return Err(Error::invalid("mask centre and rotation must be finite"));
        }
        Ok(())
    }

    /// Rotation matrix mapping local shape coordinates to image coordinates.
    pub fn rotation_matrix(&self) -> Vec<Vec<f64>> {
        let d = self.ndim();
        let mut r: Vec<Vec<f64>> = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let mut angles = self.rotation.iter();
        for i in 0..d {
            for j in (i + 1)..d {
                let theta = *angles.next().expect("validated rotation length");
                if theta == 0.0 {
                    continue;
                }
                let (s, c) = theta.sin_cos();
                // r <- r * G(i, j, theta)
                for row in r.iter_mut() {
                    let (a, b) = (row[i], row[j]);
                    row[i] = c * a + s * b;
                    row[j] = -s * a + c * b;
                }
            }
        }
        r
    }

    fn to_local(&self, rot: &[Vec<f64>], point: &[f64]) -> Vec<f64> {
        let d = self.ndim();
        (0..d)
            .map(|k| (0..d).map(|i| rot[i][k] * (point[i] - self.center[i])).sum())
            .collect()
    }

    fn contains_local(&self, q: &[f64]) -> bool {
        match self.kind {
            MaskKind::Ellipsoid => {
                q.iter()
                    .zip(&self.semi_axes)
                    .map(|(v, a)| (v / a) * (v / a))
                    .sum::<f64>()
                    <= 1.0 + BOUNDARY_SLACK
            }
            MaskKind::Cuboid => q
                .iter()
                .zip(&self.semi_axes)
                .all(|(v, a)| v.abs() <= a * (1.0 + BOUNDARY_SLACK)),
        }
    }

    /// Membership of a point in image coordinates; the surface counts as inside.
    pub fn contains(&self, point: &[f64]) -> bool {
        let rot = self.rotation_matrix();
        self.contains_local(&self.to_local(&rot, point))
    }

    /// Distance from `origin` (inside the shape) along unit vector `dir` to
    /// the shape surface.
    pub fn ray_exit_distance(&self, origin: &[f64], dir: &[f64]) -> f64 {
        let rot = self.rotation_matrix();
        let o = self.to_local(&rot, origin);
        let d = self.ndim();
        let w: Vec<f64> = (0..d)
            .map(|k| (0..d).map(|i| rot[i][k] * dir[i]).sum())
            .collect();
        match self.kind {
            MaskKind::Ellipsoid => {
                let (mut qa, mut qb, mut qc) = (0.0, 0.0, -1.0);
                for k in 0..d {
                    let a2 = self.semi_axes[k] * self.semi_axes[k];
                    qa += w[k] * w[k] / a2;
                    qb += 2.0 * o[k] * w[k] / a2;
                    qc += o[k] * o[k] / a2;
                }
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
                (-qb + disc.sqrt()) / (2.0 * qa)
            }
            MaskKind::Cuboid => (0..d)
                .filter(|&k| w[k] != 0.0)
                .map(|k| (self.semi_axes[k].copysign(w[k]) - o[k]) / w[k])
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Half-width of the shape's axis-aligned hull along each image axis.
    fn hull_half_extents(&self, rot: &[Vec<f64>]) -> Vec<f64> {
        rot.iter()
            .map(|row| match self.kind {
                MaskKind::Ellipsoid => row
                    .iter()
                    .zip(&self.semi_axes)
                    .map(|(r, a)| (r * a) * (r * a))
                    .sum::<f64>()
                    .sqrt(),
                MaskKind::Cuboid => row.iter().zip(&self.semi_axes).map(|(r, a)| r.abs() * a).sum(),
            })
            .collect()
    }

    pub fn smallest_semi_axis(&self) -> f64 {
        self.semi_axes.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A mask spec together with its raster on a concrete image grid.
#[derive(Clone, Debug, PartialEq)]
pub struct AnomalyMask {
    pub spec: MaskSpec,
    pub raster: Tensor<bool>,
    /// Tightest box around the raster; empty when the raster is empty.
    pub bbox: BoundingBox,
}

impl AnomalyMask {
    pub fn voxel_count(&self) -> usize {
        self.raster.count_true()
    }

    pub fn is_empty(&self) -> bool {
        self.bbox.is_empty()
    }

    /// Indices of all raster voxels in row-major order.
    pub fn voxels(&self) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let extents = self.bbox.extents();
        for_each_index(&extents, |local| {
            let p: Vec<usize> = local.iter().zip(&self.bbox.lo).map(|(a, b)| a + b).collect();
            if *self.raster.get(&p) {
                out.push(p);
            }
        });
        out
    }

    /// Fraction of raster voxels that are also foreground.
    pub fn overlap_fraction(&self, foreground: &Tensor<bool>) -> f64 {
        let total = self.voxel_count();
        if total == 0 {
            return 0.0;
        }
        let hit = self
            .raster
            .data()
            .iter()
            .zip(foreground.data())
            .filter(|(&m, &f)| m && f)
            .count();
        hit as f64 / total as f64
    }
}

/// Rasterise `spec` onto a grid of the given shape: a voxel is set when its
/// centre lies inside the shape or on its surface. Parts outside the grid
/// are clipped.
pub fn rasterize_mask(spec: &MaskSpec, shape: &[usize]) -> Result<AnomalyMask> {
    spec.validate()?;
    if spec.ndim() != shape.len() {
        return Err(Error::invalid(format!(
            "mask has {} dimensions, image has {}",
            spec.ndim(),
            shape.len()
        )));
    }
    let mut raster = Tensor::filled(shape, false)?;
    let rot = spec.rotation_matrix();
    let half = spec.hull_half_extents(&rot);
    let d = shape.len();

    let mut scan_lo = vec![0usize; d];
    let mut scan_hi = vec![0usize; d];
    for k in 0..d {
        let lo = (spec.center[k] - half[k]).floor().max(0.0);
        let hi = (spec.center[k] + half[k]).ceil() + 1.0;
        scan_lo[k] = lo.min(shape[k] as f64) as usize;
        scan_hi[k] = hi.clamp(0.0, shape[k] as f64) as usize;
    }
    let scan = BoundingBox::new(scan_lo, scan_hi);

    let mut lo = shape.to_vec();
    let mut hi = vec![0usize; d];
    let mut any = false;
    if !scan.is_empty() {
        let mut point = vec![0.0; d];
        let mut global = vec![0usize; d];
        for_each_index(&scan.extents(), |local| {
            for k in 0..d {
                global[k] = local[k] + scan.lo[k];
                point[k] = global[k] as f64;
            }
            if spec.contains_local(&spec.to_local(&rot, &point)) {
                raster.set(&global, true);
                any = true;
                for k in 0..d {
                    lo[k] = lo[k].min(global[k]);
                    hi[k] = hi[k].max(global[k] + 1);
                }
            }
        });
    }
    let bbox = if any {
        BoundingBox::new(lo, hi)
    } else {
        BoundingBox::new(vec![0; d], vec![0; d])
    };
    Ok(AnomalyMask {
        spec: spec.clone(),
        raster,
        bbox,
    })
}

/// Voxels with intensity strictly above `threshold`.
pub fn foreground_of(x: &Tensor, threshold: f64) -> Tensor<bool> {
    x.map(|&v| v > threshold)
}

/// Knobs for [`sample_anomaly_placement`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacementConfig {
    /// Semi-axis range as a fraction of each axis extent.
    pub size_range: (f64, f64),
    pub max_attempts: usize,
    pub min_overlap: f64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            size_range: (0.04, 0.28),
            max_attempts: 100,
            min_overlap: 0.5,
        }
    }
}

impl PlacementConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(format!("invalid mask size range ({lo}, {hi})")));
        }
        if !(0.0..=1.0).contains(&self.min_overlap) {
            return Err(Error::invalid("min_overlap must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Rejection-sample a random ellipsoid or cuboid whose raster overlaps the
/// foreground by at least `config.min_overlap`.
///
/// Centres are drawn uniformly among foreground voxel centres, semi-axes
/// uniformly in `size_range` times the axis extent, and each Givens angle
/// uniformly in `[0, pi)`.
pub fn sample_anomaly_placement(
    rng: &mut RngStream,
    shape: &[usize],
    foreground: &Tensor<bool>,
    config: &PlacementConfig,
) -> Result<AnomalyMask> {
    config.validate()?;
    if foreground.shape() != shape {
        return Err(Error::invalid(format!(
            "foreground shape {:?} does not match image shape {shape:?}",
            foreground.shape()
        )));
    }
    let candidates: Vec<usize> = foreground
        .data()
        .iter()
        .enumerate()
        .filter_map(|(k, &f)| f.then_some(k))
        .collect();
    if candidates.is_empty() {
        return Err(Error::PlacementFailure { attempts: 0 });
    }
    let d = shape.len();
    let (lo, hi) = config.size_range;
    for _ in 0..config.max_attempts {
        let kind = if rng.gen_bool(0.5) {
            MaskKind::Ellipsoid
        } else {
            MaskKind::Cuboid
        };
        let pick = candidates[rng.gen_range(0..candidates.len())];
        let center: Vec<f64> = foreground.unravel(pick).into_iter().map(|i| i as f64).collect();
        let semi_axes: Vec<f64> = shape
            .iter()
            .map(|&n| rng.gen_range(lo..=hi) * n as f64)
            .collect();
        let rotation: Vec<f64> = (0..rotation_pairs(d)).map(|_| rng.gen_range(0.0..PI)).collect();
        let spec = MaskSpec::new(kind, center, semi_axes, rotation)?;
        let mask = rasterize_mask(&spec, shape)?;
        if !mask.is_empty() && mask.overlap_fraction(foreground) >= config.min_overlap {
            return Ok(mask);
        }
    }
    Err(Error::PlacementFailure {
        attempts: config.max_attempts,
    })
}

/// Number of anomalies for one image: start at one and keep adding while a
/// fair coin lands heads, capped at `max`.
pub fn repeat_count(rng: &mut RngStream, max: usize) -> usize {
    debug_assert!(max >= 1);
    let mut k = 1;
    while k < max && rng.gen_bool(0.5) {
        k += 1;
    }
    k
}
