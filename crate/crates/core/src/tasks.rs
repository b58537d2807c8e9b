//! The five synthetic anomaly tasks.
//!
//! Blending tasks transplant gradients from a donor image with a Poisson
//! solve, the sink/source tasks radially resample intensities inside the
//! mask, and the smooth intensity task adds a plateau that ramps down towards
//! the mask edge. Every task is a pure function of its inputs and the
//! recorded parameters, so an anomaly can be replayed from its record alone.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distance::distance_to_outside;
use crate::error::{Error, Result};
use crate::interp::sample_multilinear;
use crate::labelling::{label_map, DEFAULT_SIGMA};
use crate::mask::{
    foreground_of, rasterize_mask, repeat_count, sample_anomaly_placement, AnomalyMask, MaskSpec,
    PlacementConfig,
};
use crate::poisson::{blend_region, poisson_blend};
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    IntraBlend,
    InterBlend,
    Sink,
    Source,
    SmoothIntensity,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::IntraBlend,
        TaskKind::InterBlend,
        TaskKind::Sink,
        TaskKind::Source,
        TaskKind::SmoothIntensity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::IntraBlend => "intra_blend",
            TaskKind::InterBlend => "inter_blend",
            TaskKind::Sink => "sink",
            TaskKind::Source => "source",
            TaskKind::SmoothIntensity => "smooth_intensity",
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown task kind {s:?}")))
    }
}

/// Deformation centre and exponent for the sink/source tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeformParams {
    pub center: Vec<f64>,
    pub exponent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Positive => 1.0,
            Sign::Negative => -1.0,
        }
    }
}

/// Smooth intensity change: `sign * magnitude` on the plateau, ramping
/// linearly to zero over `ramp_distance` voxels from the mask edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntensityParams {
    pub magnitude: f64,
    pub sign: Sign,
    pub ramp_distance: f64,
}

/// Everything needed to re-apply one anomaly given its mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TaskParams {
    Blend { donor: String, offset: Vec<isize> },
    Deform(DeformParams),
    Intensity(IntensityParams),
}

/// One applied anomaly and the label map of the change it introduced.
#[derive(Clone, Debug)]
pub struct AnomalyRecord {
    pub kind: TaskKind,
    pub mask: AnomalyMask,
    pub params: TaskParams,
    pub label: Tensor,
}

// ---------------------------------------------------------------------------
// blending

pub fn intra_blend(x: &Tensor, donor: &Tensor, mask: &AnomalyMask) -> Result<Tensor> {
    x.require_same_shape(donor)?;
    poisson_blend(x, donor, mask, &vec![0; x.ndim()])
}

/// Uniformly random offset placing the mask's blend box (with its boundary
/// shell) inside `external`.
pub fn random_source_offset(
    x_shape: &[usize],
    external: &Tensor,
    mask: &AnomalyMask,
    rng: &mut RngStream,
) -> Result<Vec<isize>> {
    if external.ndim() != x_shape.len() {
        return Err(Error::invalid(format!(
            "external tensor is {}-d, image is {}-d",
            external.ndim(),
            x_shape.len()
        )));
    }
    let region = blend_region(mask, x_shape);
    if mask.is_empty() || region.is_empty() {
        return Ok(vec![0; x_shape.len()]);
    }
    let frame = region
        .grow_within(1, x_shape)
        .ok_or_else(|| Error::invalid("blend region touches the image border"))?;
    let extents = frame.extents();
    if extents.iter().zip(external.shape()).any(|(e, n)| e > n) {
        return Err(Error::invalid(format!(
            "external tensor {:?} smaller than blend box {extents:?}",
            external.shape()
        )));
    }
    Ok(frame
        .lo
        .iter()
        .zip(&extents)
        .zip(external.shape())
        .map(|((&lo, &e), &n)| rng.gen_range(0..=n - e) as isize - lo as isize)
        .collect())
}

/// Blend a patch from an external image at a random valid location.
/// Returns the blended image and the source offset used.
pub fn inter_blend(
    x: &Tensor,
    external: &Tensor,
    mask: &AnomalyMask,
    rng: &mut RngStream,
) -> Result<(Tensor, Vec<isize>)> {
    let offset = random_source_offset(x.shape(), external, mask, rng)?;
    let out = poisson_blend(x, external, mask, &offset)?;
    Ok((out, offset))
}

// ---------------------------------------------------------------------------
// radial deformations

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Radial {
    Sink,
    Source,
}

/// New radius for a point at radius `r` on a ray whose mask radius is `d`.
pub fn resampled_radius(kind: Radial, r: f64, d: f64, exponent: f64) -> f64 {
    let rho = (r / d).clamp(0.0, 1.0);
    match kind {
        Radial::Sink => d * (1.0 - (1.0 - rho).powf(exponent)),
        Radial::Source => d * rho.powf(exponent),
    }
}

/// Position sampled for voxel `p`. The centre maps to itself.
pub fn resample_position(kind: Radial, spec: &MaskSpec, params: &DeformParams, p: &[f64]) -> Vec<f64> {
    let c = &params.center;
    let v: Vec<f64> = p.iter().zip(c).map(|(a, b)| a - b).collect();
    let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if r == 0.0 {
        return c.clone();
    }
    let dir: Vec<f64> = v.iter().map(|a| a / r).collect();
    let d = spec.ray_exit_distance(c, &dir);
    let new_r = resampled_radius(kind, r, d, params.exponent);
    c.iter().zip(&dir).map(|(c, u)| c + u * new_r).collect()
}

fn check_deform(x: &Tensor, mask: &AnomalyMask, params: &DeformParams) -> Result<()> {
    if mask.raster.shape() != x.shape() {
        return Err(Error::invalid("mask raster does not match image"));
    }
    if !(params.exponent >= 1.0 && params.exponent.is_finite()) {
        return Err(Error::invalid(format!(
            "deformation exponent must be >= 1, got {}",
            params.exponent
        )));
    }
    if params.center.len() != x.ndim() || !mask.spec.contains(&params.center) {
        return Err(Error::invalid(format!(
            "deformation centre {:?} is not inside the mask",
            params.center
        )));
    }
    Ok(())
}

fn radial_deform(kind: Radial, x: &Tensor, mask: &AnomalyMask, params: &DeformParams) -> Result<Tensor> {
    check_deform(x, mask, params)?;
    if params.exponent == 1.0 {
        return Ok(x.clone());
    }
    let mut out = x.clone();
    for p in mask.voxels() {
        let pf: Vec<f64> = p.iter().map(|&i| i as f64).collect();
        let q = resample_position(kind, &mask.spec, params, &pf);
        out.set(&p, sample_multilinear(x, &q));
    }
    Ok(out)
}

/// Pull intensities towards the centre.
pub fn sink_deform(x: &Tensor, mask: &AnomalyMask, params: &DeformParams) -> Result<Tensor> {
    radial_deform(Radial::Sink, x, mask, params)
}

/// Push intensities away from the centre.
pub fn source_deform(x: &Tensor, mask: &AnomalyMask, params: &DeformParams) -> Result<Tensor> {
    radial_deform(Radial::Source, x, mask, params)
}

// ---------------------------------------------------------------------------
// intensity

/// Signed change at a voxel `distance` voxels inside the mask edge.
pub fn intensity_change(params: &IntensityParams, distance: f64) -> f64 {
    params.sign.value() * params.magnitude * (distance / params.ramp_distance).min(1.0)
}

pub fn smooth_intensity(x: &Tensor, mask: &AnomalyMask, params: &IntensityParams) -> Result<Tensor> {
    if mask.raster.shape() != x.shape() {
        return Err(Error::invalid("mask raster does not match image"));
    }
    if !(params.magnitude > 0.0 && params.magnitude.is_finite()) {
        return Err(Error::invalid("intensity magnitude must be positive"));
    }
    if !(params.ramp_distance > 0.0 && params.ramp_distance.is_finite()) {
        return Err(Error::invalid("ramp distance must be positive"));
    }
    let dist = distance_to_outside(&mask.raster);
    let mut out = x.clone();
    for ((o, &inside), &d) in out.data_mut().iter_mut().zip(mask.raster.data()).zip(dist.data()) {
        if inside {
            *o += intensity_change(params, d);
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// random application

/// A donor image with a stable identifier for the record log.
#[derive(Clone, Debug)]
pub struct NamedTensor {
    pub id: String,
    pub tensor: Tensor,
}

/// Images available as blend sources.
#[derive(Clone, Copy, Debug, Default)]
pub struct DonorPool<'a> {
    /// Same-dataset samples.
    pub intra: &'a [NamedTensor],
    /// External-dataset images.
    pub external: &'a [NamedTensor],
    /// Sample being corrupted; never used as its own donor.
    pub exclude: Option<&'a str>,
}

impl<'a> DonorPool<'a> {
    fn find(&self, id: &str) -> Option<&'a NamedTensor> {
        self.intra.iter().chain(self.external).find(|d| d.id == id)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub max_anomalies: usize,
    /// Fixed anomaly count instead of the coin-toss draw.
    pub force_count: Option<usize>,
    pub placement: PlacementConfig,
    pub foreground_threshold: f64,
    /// Deformation exponent range `(lo, hi]`.
    pub exponent_range: (f64, f64),
    /// Intensity magnitude as a multiple of the foreground interquartile range.
    pub magnitude_range: (f64, f64),
    /// Ramp distance as a fraction of the smallest semi-axis.
    pub ramp_range: (f64, f64),
    pub sigma: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            max_anomalies: 4,
            force_count: None,
            placement: PlacementConfig::default(),
            foreground_threshold: 0.0,
            exponent_range: (1.0, 4.0),
            magnitude_range: (0.25, 1.0),
            ramp_range: (0.1, 0.5),
            sigma: DEFAULT_SIGMA,
        }
    }
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        self.placement.validate()?;
        if self.max_anomalies == 0 || self.force_count == Some(0) {
            return Err(Error::invalid("anomaly count must be at least one"));
        }
        let (elo, ehi) = self.exponent_range;
        if !(elo >= 1.0 && elo < ehi && ehi.is_finite()) {
            return Err(Error::invalid(format!("invalid exponent range ({elo}, {ehi}]")));
        }
        for (name, (lo, hi)) in [("magnitude", self.magnitude_range), ("ramp", self.ramp_range)] {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::invalid(format!("invalid {name} range [{lo}, {hi}]")));
            }
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("labeller sigma must be positive"));
        }
        Ok(())
    }
}

/// Interquartile range of the foreground intensities, falling back to one
/// for flat images.
pub fn robust_scale(x: &Tensor, foreground: &Tensor<bool>) -> f64 {
    let mut values: Vec<f64> = x
        .data()
        .iter()
        .zip(foreground.data())
        .filter_map(|(&v, &f)| f.then_some(v))
        .collect();
    if values.len() < 2 {
        return 1.0;
    }
    values.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (values.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        values[lo] + (pos - lo as f64) * (values[hi] - values[lo])
    };
    let iqr = quantile(0.75) - quantile(0.25);
    if iqr > 0.0 {
        iqr
    } else {
        1.0
    }
}

/// Draw the task parameters for one placed mask.
pub fn draw_params(
    kind: TaskKind,
    x: &Tensor,
    mask: &AnomalyMask,
    scale: f64,
    donors: &DonorPool<'_>,
    rng: &mut RngStream,
    config: &TaskConfig,
) -> Result<TaskParams> {
    match kind {
        TaskKind::IntraBlend => {
            let candidates: Vec<&NamedTensor> = donors
                .intra
                .iter()
                .filter(|d| Some(d.id.as_str()) != donors.exclude && d.tensor.shape() == x.shape())
                .collect();
            if candidates.is_empty() {
                return Err(Error::invalid("no same-shape donor available for intra-dataset blending"));
            }
            let donor = candidates[rng.gen_range(0..candidates.len())];
            Ok(TaskParams::Blend {
                donor: donor.id.clone(),
                offset: vec![0; x.ndim()],
            })
        }
        TaskKind::InterBlend => {
            if donors.external.is_empty() {
                return Err(Error::invalid("no external images available for inter-dataset blending"));
            }
            let donor = &donors.external[rng.gen_range(0..donors.external.len())];
            let offset = random_source_offset(x.shape(), &donor.tensor, mask, rng)?;
            Ok(TaskParams::Blend {
                donor: donor.id.clone(),
                offset,
            })
        }
        TaskKind::Sink | TaskKind::Source => {
            let voxels = mask.voxels();
            let c = &voxels[rng.gen_range(0..voxels.len())];
            let (lo, hi) = config.exponent_range;
            // (lo, hi]: flip a draw from [0, 1)
            let u: f64 = rng.gen();
            Ok(TaskParams::Deform(DeformParams {
                center: c.iter().map(|&i| i as f64).collect(),
                exponent: lo + (hi - lo) * (1.0 - u),
            }))
        }
        TaskKind::SmoothIntensity => {
            let (mlo, mhi) = config.magnitude_range;
            let (rlo, rhi) = config.ramp_range;
            let magnitude = rng.gen_range(mlo..=mhi) * scale;
            let sign = if rng.gen_bool(0.5) {
                Sign::Positive
            } else {
                Sign::Negative
            };
            let ramp_distance = rng.gen_range(rlo..=rhi) * mask.spec.smallest_semi_axis();
            Ok(TaskParams::Intensity(IntensityParams {
                magnitude,
                sign,
                ramp_distance,
            }))
        }
    }
}

/// Apply one anomaly with fully specified parameters.
pub fn apply_anomaly(
    x: &Tensor,
    kind: TaskKind,
    mask: &AnomalyMask,
    params: &TaskParams,
    donors: &DonorPool<'_>,
) -> Result<Tensor> {
    match (kind, params) {
        (TaskKind::IntraBlend | TaskKind::InterBlend, TaskParams::Blend { donor, offset }) => {
            let src = donors
                .find(donor)
                .ok_or_else(|| Error::Data(format!("donor {donor:?} not available")))?;
            poisson_blend(x, &src.tensor, mask, offset)
        }
        (TaskKind::Sink, TaskParams::Deform(p)) => sink_deform(x, mask, p),
        (TaskKind::Source, TaskParams::Deform(p)) => source_deform(x, mask, p),
        (TaskKind::SmoothIntensity, TaskParams::Intensity(p)) => smooth_intensity(x, mask, p),
        _ => Err(Error::invalid(format!("parameters {params:?} do not fit task {kind}"))),
    }
}

/// Corrupt `x` with between one and `max_anomalies` anomalies of one task.
///
/// Anomaly `i` draws from `rng.derive(i)`, so each anomaly's randomness is
/// independent of the others. Placements that fail are skipped; if none
/// succeed the task fails.
pub fn apply_random_anomalies(
    x: &Tensor,
    task: TaskKind,
    donors: &DonorPool<'_>,
    rng: &mut RngStream,
    config: &TaskConfig,
) -> Result<(Tensor, Vec<AnomalyRecord>)> {
    config.validate()?;
    x.check_finite()?;
    let count = config
        .force_count
        .unwrap_or_else(|| repeat_count(rng, config.max_anomalies));
    let foreground = foreground_of(x, config.foreground_threshold);
    let scale = robust_scale(x, &foreground);

    let mut current = x.clone();
    let mut records = Vec::with_capacity(count);
    let mut last_failure = None;
    for i in 0..count {
        let mut sub = rng.derive(i as u64);
        let mask = match sample_anomaly_placement(&mut sub, x.shape(), &foreground, &config.placement) {
            Ok(mask) => mask,
            Err(e @ Error::PlacementFailure { .. }) => {
                last_failure = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let params = draw_params(task, &current, &mask, scale, donors, &mut sub, config)?;
        let next = apply_anomaly(&current, task, &mask, &params, donors)?;
        let label = label_map(&current, &next, config.sigma)?;
        records.push(AnomalyRecord {
            kind: task,
            mask,
            params,
            label,
        });
        current = next;
    }
    if records.is_empty() {
        return Err(Error::TaskFailure(format!(
            "all {count} placements failed ({})",
            last_failure.map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    Ok((current, records))
}

/// Re-apply logged anomalies in order.
pub fn replay_anomalies(
    x: &Tensor,
    kind: TaskKind,
    anomalies: &[(MaskSpec, TaskParams)],
    donors: &DonorPool<'_>,
) -> Result<Tensor> {
    let mut current = x.clone();
    for (spec, params) in anomalies {
        let mask = rasterize_mask(spec, x.shape())?;
        current = apply_anomaly(&current, kind, &mask, params, donors)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::MaskKind;
    use crate::poisson::interior_laplacian;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = RngStream::new(seed, 77);
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).unwrap()
    }

    fn smooth(shape: &[usize], phase: f64) -> Tensor {
        Tensor::from_fn(shape, |i| {
            i.iter()
                .enumerate()
                .map(|(d, &v)| (0.3 * v as f64 + phase * (d + 1) as f64).sin())
                .sum()
        })
        .unwrap()
    }

    fn disc(shape: &[usize], center: Vec<f64>, radius: f64) -> AnomalyMask {
        let spec = MaskSpec::axis_aligned(MaskKind::Ellipsoid, center, vec![radius; shape.len()]).unwrap();
        rasterize_mask(&spec, shape).unwrap()
    }

    #[test]
    fn task_names_round_trip() {
        for k in TaskKind::ALL {
            assert_eq!(k.name().parse::<TaskKind>().unwrap(), k);
        }
        assert!("blend".parse::<TaskKind>().is_err());
    }

    #[test]
    fn intra_self_blend() {
        let x = random(&[20, 20], 1);
        let mask = disc(&[20, 20], vec![9.0, 10.0], 5.0);
        let y = intra_blend(&x, &x, &mask).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn intra_donor_laplacian_is_reproduced() {
        let x = random(&[20, 20], 1);
        let donor = random(&[20, 20], 2);
        let mask = disc(&[20, 20], vec![9.0, 10.0], 5.0);
        let y = intra_blend(&x, &donor, &mask).unwrap();
        let region = blend_region(&mask, &[20, 20]);
        let framed = region.grow_within(1, &[20, 20]).unwrap();
        let got = interior_laplacian(&y.extract(&framed).unwrap()).unwrap();
        let want = interior_laplacian(&donor.extract(&framed).unwrap()).unwrap();
        let tol = 1e-4 * want.max_abs();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() <= tol);
        }
    }

    #[test]
    fn intra_boundary_fidelity() {
        let x = random(&[20, 20], 1);
        let donor = Tensor::filled(&[20, 20], 0.3).unwrap();
        let mask = disc(&[20, 20], vec![9.0, 10.0], 5.0);
        let y = intra_blend(&x, &donor, &mask).unwrap();
        let region = blend_region(&mask, &[20, 20]);
        let shell = region.grow_within(1, &[20, 20]).unwrap();
        for k in 0..x.len() {
            let p = x.unravel(k);
            if shell.contains(&p) && !region.contains(&p) {
                assert!((x.data()[k] - y.data()[k]).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn inter_blend_behaviour() {
        // zero guidance reproduces x exactly when x is discrete-harmonic
        let ramp = Tensor::from_fn(&[24, 24], |i| 0.3 * i[0] as f64 - 0.7 * i[1] as f64 + 2.0).unwrap();
        let mask = disc(&[24, 24], vec![12.0, 12.0], 4.0);
        let flat = Tensor::filled(&[40, 40], 5.0).unwrap();
        let (y, _) = inter_blend(&ramp, &flat, &mask, &mut RngStream::new(1, 1)).unwrap();
        for (a, b) in ramp.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-4);
        }

        let x = smooth(&[24, 24], 0.1);

        let ext = random(&[40, 40], 3);
        let (y1, o1) = inter_blend(&x, &ext, &mask, &mut RngStream::new(9, 2)).unwrap();
        let (y2, o2) = inter_blend(&x, &ext, &mask, &mut RngStream::new(9, 2)).unwrap();
        assert_eq!(o1, o2);
        assert_eq!(y1, y2);
        assert!(x.data().iter().zip(y1.data()).any(|(a, b)| (a - b).abs() > 1e-3));

        let tiny = Tensor::filled(&[4, 4], 0.0).unwrap();
        assert!(matches!(
            inter_blend(&x, &tiny, &mask, &mut RngStream::new(1, 1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn sink_anchor_and_identity() {
        // f = 2, r = d/2 -> sample at 0.75 d
        assert!((resampled_radius(Radial::Sink, 0.5, 1.0, 2.0) - 0.75).abs() < 1e-12);
        assert!((resampled_radius(Radial::Source, 0.5, 1.0, 2.0) - 0.25).abs() < 1e-12);
        assert_eq!(resampled_radius(Radial::Sink, 3.0, 3.0, 2.5), 3.0);
        assert_eq!(resampled_radius(Radial::Source, 3.0, 3.0, 2.5), 3.0);

        let x = random(&[16, 16], 4);
        let mask = disc(&[16, 16], vec![8.0, 7.0], 5.0);
        let params = DeformParams {
            center: vec![8.0, 7.0],
            exponent: 1.0,
        };
        assert_eq!(sink_deform(&x, &mask, &params).unwrap(), x);
        assert_eq!(source_deform(&x, &mask, &params).unwrap(), x);
    }

    #[test]
    fn sink_resamples_along_the_ray() {
        let spec = MaskSpec::axis_aligned(MaskKind::Ellipsoid, vec![10.0, 10.0], vec![8.0, 8.0]).unwrap();
        let params = DeformParams {
            center: vec![10.0, 10.0],
            exponent: 2.0,
        };
        let q = resample_position(Radial::Sink, &spec, &params, &[14.0, 10.0]);
        assert!((q[0] - 16.0).abs() < 1e-12 && (q[1] - 10.0).abs() < 1e-12);
        let q = resample_position(Radial::Source, &spec, &params, &[10.0, 6.0]);
        assert!((q[0] - 10.0).abs() < 1e-12 && (q[1] - 8.0).abs() < 1e-12);
        assert_eq!(resample_position(Radial::Sink, &spec, &params, &[10.0, 10.0]), vec![10.0, 10.0]);
    }

    #[test]
    fn deformations_are_local_and_in_range() {
        let x = random(&[18, 18], 5);
        let mask = disc(&[18, 18], vec![9.0, 8.0], 6.0);
        let params = DeformParams {
            center: vec![10.0, 8.0],
            exponent: 3.0,
        };
        for y in [sink_deform(&x, &mask, &params).unwrap(), source_deform(&x, &mask, &params).unwrap()] {
            for k in 0..x.len() {
                if !mask.raster.data()[k] {
                    assert_eq!(x.data()[k], y.data()[k]);
                }
                assert!(y.data()[k] >= x.min() && y.data()[k] <= x.max());
            }
            assert_ne!(y, x);
        }
    }

    #[test]
    fn resampling_approaches_identity_at_the_edge() {
        let spec = MaskSpec::new(MaskKind::Cuboid, vec![10.0, 10.0], vec![7.0, 4.0], vec![0.5]).unwrap();
        let params = DeformParams {
            center: vec![11.0, 9.5],
            exponent: 4.0,
        };
        for angle in [0.1f64, 1.0, 2.0, 3.5, 5.0] {
            let dir = [angle.cos(), angle.sin()];
            let d = spec.ray_exit_distance(&params.center, &dir);
            for gap in [1e-1, 1e-3, 1e-6] {
                let r = d - gap;
                let p: Vec<f64> = params.center.iter().zip(dir).map(|(c, u)| c + u * r).collect();
                for kind in [Radial::Sink, Radial::Source] {
                    let q = resample_position(kind, &spec, &params, &p);
                    let shift = q.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    assert!(shift <= params.exponent * gap + 1e-9);
                }
            }
        }
    }

    #[test]
    fn deform_rejects_outside_centre() {
        let x = random(&[16, 16], 4);
        let mask = disc(&[16, 16], vec![8.0, 7.0], 3.0);
        let params = DeformParams {
            center: vec![1.0, 1.0],
            exponent: 2.0,
        };
        assert!(sink_deform(&x, &mask, &params).is_err());
    }

    #[test]
    fn intensity_modulation() {
        let p = IntensityParams {
            magnitude: 0.8,
            sign: Sign::Positive,
            ramp_distance: 4.0,
        };
        assert!((intensity_change(&p, 2.0) - 0.4).abs() < 1e-15);
        assert_eq!(intensity_change(&p, 0.0), 0.0);
        assert_eq!(intensity_change(&p, 9.0), 0.8);
        let n = IntensityParams { sign: Sign::Negative, ..p };
        assert_eq!(intensity_change(&n, 5.0), -0.8);
    }

    #[test]
    fn smooth_intensity_is_local_and_saturates() {
        let x = random(&[30, 30], 6);
        let mask = disc(&[30, 30], vec![15.0, 15.0], 10.0);
        let p = IntensityParams {
            magnitude: 0.5,
            sign: Sign::Negative,
            ramp_distance: 3.0,
        };
        let y = smooth_intensity(&x, &mask, &p).unwrap();
        for k in 0..x.len() {
            if !mask.raster.data()[k] {
                assert_eq!(x.data()[k], y.data()[k]);
            }
        }
        assert!((y.get(&[15, 15]) - x.get(&[15, 15]) + 0.5).abs() < 1e-12);
        let edge_change = y.get(&[15, 6]) - x.get(&[15, 6]);
        assert!(edge_change < 0.0 && edge_change > -0.5);
    }

    fn donors_for(shape: &[usize]) -> (Vec<NamedTensor>, Vec<NamedTensor>) {
        let intra = (0..3)
            .map(|i| NamedTensor {
                id: format!("s{i}"),
                tensor: smooth(shape, i as f64),
            })
            .collect();
        let external = vec![NamedTensor {
            id: "ext".into(),
            tensor: random(&[64, 64], 8),
        }];
        (intra, external)
    }

    #[test]
    fn forced_single_intensity_anomaly() {
        let x = smooth(&[32, 32], 0.3).map(|v| v + 3.0);
        let config = TaskConfig {
            force_count: Some(1),
            ..TaskConfig::default()
        };
        let (y, records) = apply_random_anomalies(
            &x,
            TaskKind::SmoothIntensity,
            &DonorPool::default(),
            &mut RngStream::new(4, 4),
            &config,
        )
        .unwrap();
        assert_eq!(records.len(), 1);
        for k in 0..x.len() {
            if x.data()[k] != y.data()[k] {
                assert!(records[0].mask.raster.data()[k]);
            }
        }
        assert_eq!(records[0].label, label_map(&x, &y, config.sigma).unwrap());
    }

    #[test]
    fn every_task_is_deterministic_and_replayable() {
        let shape = [32, 32];
        let (intra, external) = donors_for(&shape);
        let x = smooth(&shape, 0.7).map(|v| v + 3.0);
        let pool = DonorPool {
            intra: &intra,
            external: &external,
            exclude: Some("s0"),
        };
        let config = TaskConfig::default();
        for task in TaskKind::ALL {
            let (a, ra) = apply_random_anomalies(&x, task, &pool, &mut RngStream::new(11, 3), &config).unwrap();
            let (b, _) = apply_random_anomalies(&x, task, &pool, &mut RngStream::new(11, 3), &config).unwrap();
            assert_eq!(a, b, "{task}");
            let log: Vec<(MaskSpec, TaskParams)> =
                ra.iter().map(|r| (r.mask.spec.clone(), r.params.clone())).collect();
            let replayed = replay_anomalies(&x, task, &log, &pool).unwrap();
            assert_eq!(replayed, a, "{task}");
            if let TaskParams::Blend { donor, .. } = &ra[0].params {
                assert_ne!(donor, "s0");
            }
        }
    }

    #[test]
    fn blends_need_donors() {
        let x = smooth(&[32, 32], 0.7).map(|v| v + 3.0);
        let config = TaskConfig::default();
        for task in [TaskKind::IntraBlend, TaskKind::InterBlend] {
            let r = apply_random_anomalies(&x, task, &DonorPool::default(), &mut RngStream::new(1, 1), &config);
            assert!(matches!(r, Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn empty_foreground_is_a_task_failure() {
        let x = Tensor::filled(&[16, 16], -1.0).unwrap();
        let r = apply_random_anomalies(
            &x,
            TaskKind::Sink,
            &DonorPool::default(),
            &mut RngStream::new(1, 1),
            &TaskConfig::default(),
        );
        assert!(matches!(r, Err(Error::TaskFailure(_))));
    }

    #[test]
    fn mean_anomaly_count() {
        let x = smooth(&[12, 12], 0.2).map(|v| v + 3.0);
        let n = 10_000;
        let mut total = 0;
        for i in 0..n {
            let (_, recs) = apply_random_anomalies(
                &x,
                TaskKind::SmoothIntensity,
                &DonorPool::default(),
                &mut RngStream::new(2024, i),
                &TaskConfig::default(),
            )
            .unwrap();
            total += recs.len();
        }
        let mean = total as f64 / n as f64;
        assert!((mean - 1.875).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn robust_scale_is_iqr() {
        let x = Tensor::new(&[5], vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let fg = Tensor::filled(&[5], true).unwrap();
        assert_eq!(robust_scale(&x, &fg), 2.0);
        let flat = Tensor::filled(&[5], 2.0).unwrap();
        assert_eq!(robust_scale(&flat, &fg), 1.0);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn deformations_stay_local_and_in_range(seed: u64, exponent in 1.0f64..4.0, source: bool) {
            let shape = [20usize, 22];
            let mut rng = RngStream::new(seed, 3);
            let x = random(&shape, seed);
            let fg = Tensor::filled(&shape, true).unwrap();
            let mask = sample_anomaly_placement(&mut rng, &shape, &fg, &PlacementConfig::default()).unwrap();
            let voxels = mask.voxels();
            let c = &voxels[rng.gen_range(0..voxels.len())];
            let params = DeformParams { center: c.iter().map(|&v| v as f64).collect(), exponent };
            let y = if source { source_deform(&x, &mask, &params) } else { sink_deform(&x, &mask, &params) }.unwrap();
            // interpolation corners may sit just outside the raster, so the
            // bound is the image range
            let (glo, ghi) = (x.min(), x.max());
            for k in 0..x.len() {
                let idx = x.unravel(k);
                if *mask.raster.get(&idx) {
                    proptest::prop_assert!(y.data()[k] >= glo - 1e-12 && y.data()[k] <= ghi + 1e-12);
                } else {
                    proptest::prop_assert_eq!(x.data()[k].to_bits(), y.data()[k].to_bits());
                }
            }
        }
    }
}
