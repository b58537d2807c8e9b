//! Dense row-major N-dimensional grids and axis-aligned boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense N-dimensional grid stored in row-major (C) order.
///
/// `Tensor` (the `f64` instantiation) carries image intensities; `Tensor<bool>`
/// carries rasterised masks and foreground maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f64> {
    shape: Vec<usize>,
    data: Vec<T>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::invalid("tensor must have at least one axis"));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(format!("zero extent in shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::invalid(format!("shape {shape:?} overflows")))
}

impl<T: Clone> Tensor<T> {
    pub fn filled(shape: &[usize], value: T) -> Result<Self> {
        let len = check_shape(shape)?;
        Ok(Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        })
    }
}

impl<T> Tensor<T> {
    pub fn from_shape_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = check_shape(shape)?;
        let mut data = Vec::with_capacity(len);
        let mut index = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&index));
            increment(&mut index, shape);
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut offset = 0;
        for (&i, &n) in index.iter().zip(&self.shape) {
            debug_assert!(i < n);
            offset = offset * n + i;
        }
        offset
    }

    pub fn unravel(&self, mut offset: usize) -> Vec<usize> {
        let mut index = vec![0; self.shape.len()];
        for d in (0..self.shape.len()).rev() {
            index[d] = offset % self.shape[d];
            offset /= self.shape[d];
        }
        index
    }

    pub fn get(&self, index: &[usize]) -> &T {
        &self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let offset = self.offset(index);
        self.data[offset] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn zip_map<U, V>(&self, other: &Tensor<U>, mut f: impl FnMut(&T, &U) -> V) -> Result<Tensor<V>> {
        self.require_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(a, b))
                .collect(),
        })
    }

    pub fn require_same_shape<U>(&self, other: &Tensor<U>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox::new(vec![0; self.ndim()], self.shape.clone())
    }
}

impl<T: Clone> Tensor<T> {
    /// Copy of the sub-grid covered by `region`.
    pub fn extract(&self, region: &BoundingBox) -> Result<Tensor<T>> {
        if !self.full_box().contains_box(region) || region.is_empty() {
            return Err(Error::invalid(format!(
                "region {region:?} outside tensor of shape {:?}",
                self.shape
            )));
        }
        let extents = region.extents();
        let mut data = Vec::with_capacity(region.volume());
        for_each_index(&extents, |local| {
            let global: Vec<usize> = local.iter().zip(&region.lo).map(|(a, b)| a + b).collect();
            data.push(self.get(&global).clone());
        });
        Tensor::from_shape_vec(&extents, data)
    }

    /// Overwrite the sub-grid at `origin` with `patch`.
    pub fn paste(&mut self, patch: &Tensor<T>, origin: &[usize]) -> Result<()> {
        let region = BoundingBox::from_origin(origin, patch.shape());
        if patch.ndim() != self.ndim() || !self.full_box().contains_box(&region) {
            return Err(Error::invalid(format!(
                "patch {:?} at {origin:?} does not fit in shape {:?}",
                patch.shape(),
                self.shape
            )));
        }
        let mut global = vec![0usize; self.ndim()];
        for (k, value) in patch.data.iter().enumerate() {
            let local = patch.unravel(k);
            for d in 0..global.len() {
                global[d] = local[d] + origin[d];
            }
            self.set(&global, value.clone());
        }
        Ok(())
    }
}

impl Tensor<f64> {
    /// Tensor from values, rejecting non-finite entries.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let t = Self::from_shape_vec(shape, data)?;
        t.check_finite()?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::filled(shape, 0.0)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(Error::invalid(format!(
                "non-finite value at {:?}",
                self.unravel(k)
            ))),
            None => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        self.map(|v| v * factor)
    }
}

impl Tensor<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Half-open axis-aligned box `[lo, hi)` per axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl BoundingBox {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn from_origin(origin: &[usize], extents: &[usize]) -> Self {
        Self {
            lo: origin.to_vec(),
            hi: origin.iter().zip(extents).map(|(o, e)| o + e).collect(),
        }
    }

    pub fn ndim(&self) -> usize {
        self.lo.len()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| h.saturating_sub(*l))
            .collect()
    }

    pub fn volume(&self) -> usize {
        self.extents().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| h <= l)
    }

    pub fn contains(&self, index: &[usize]) -> bool {
        index
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(&i, (&l, &h))| l <= i && i < h)
    }

    pub fn contains_box(&self, other: &BoundingBox) -> bool {
        other.ndim() == self.ndim()
            && other
                .lo
                .iter()
                .zip(&other.hi)
                .zip(self.lo.iter().zip(&self.hi))
                .all(|((ol, oh), (l, h))| l <= ol && oh <= h)
    }

    /// Box grown by `margin` on every side; `None` if it would leave `shape`.
    pub fn grow_within(&self, margin: usize, shape: &[usize]) -> Option<BoundingBox> {
        let mut lo = Vec::with_capacity(self.ndim());
        let mut hi = Vec::with_capacity(self.ndim());
        for ((&l, &h), &n) in self.lo.iter().zip(&self.hi).zip(shape) {
            lo.push(l.checked_sub(margin)?);
            if h + margin > n {
                return None;
            }
            hi.push(h + margin);
        }
        Some(BoundingBox { lo, hi })
    }

    /// Intersection with `[margin, extent - margin)` on every axis.
    pub fn shrink_to_interior(&self, shape: &[usize], margin: usize) -> BoundingBox {
        BoundingBox {
            lo: self.lo.iter().map(|&l| l.max(margin)).collect(),
            hi: self
                .hi
                .iter()
                .zip(shape)
                .map(|(&h, &n)| h.min(n.saturating_sub(margin)))
                .collect(),
        }
    }

    /// Box translated by a signed offset; `None` if a coordinate goes negative.
    pub fn translate(&self, offset: &[isize]) -> Option<BoundingBox> {
        let shift = |v: usize, o: isize| -> Option<usize> { usize::try_from(v as isize + o).ok() };
        let mut lo = Vec::with_capacity(self.ndim());
        let mut hi = Vec::with_capacity(self.ndim());
        for ((&l, &h), &o) in self.lo.iter().zip(&self.hi).zip(offset) {
            lo.push(shift(l, o)?);
            hi.push(shift(h, o)?);
        }
        Some(BoundingBox { lo, hi })
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * shape[d + 1];
    }
    strides
}

/// Advance a row-major multi-index; returns false after the last index.
pub(crate) fn increment(index: &mut [usize], shape: &[usize]) -> bool {
    for d in (0..shape.len()).rev() {
        index[d] += 1;
        if index[d] < shape[d] {
            return true;
        }
        index[d] = 0;
    }
    false
}

/// Visit every multi-index of `shape` in row-major order.
pub(crate) fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    if shape.contains(&0) {
        return;
    }
    let mut index = vec![0usize; shape.len()];
    loop {
        f(&index);
        if !increment(&mut index, shape) {
            break;
        }
    }
}
