//! Quick-look images: a clean | corrupted | label montage and a 1-D intensity
//! profile through an anomaly.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit image, row-major, `channels` bytes per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl Raster {
    pub fn to_netpbm(&self) -> Vec<u8> {
        match self.channels {
            1 => crate::io::encode_pgm(self.width, self.height, &self.pixels),
            _ => crate::io::encode_ppm(self.width, self.height, &self.pixels),
        }
    }
}

/// 2-D view of a sample: 1-D signals become one row, 3-D volumes are cut at
/// `slice` along axis 0.
pub fn plane(t: &Tensor, slice: Option<usize>) -> Result<Tensor> {
    let shape = t.shape();
    match shape.len() {
        1 | 2 => {
            if slice.is_some_and(|s| s != 0) {
                return Err(Error::invalid(format!("slice index given for a {}-d sample", shape.len())));
            }
            let (h, w) = if shape.len() == 1 { (1, shape[0]) } else { (shape[0], shape[1]) };
            Tensor::new(&[h, w], t.data().to_vec())
        }
        3 => {
            let s = slice.unwrap_or(shape[0] / 2);
            if s >= shape[0] {
                return Err(Error::invalid(format!("slice {s} out of range 0..{}", shape[0])));
            }
            let n = shape[1] * shape[2];
            Tensor::new(&shape[1..], t.data()[s * n..(s + 1) * n].to_vec())
        }
        d => Err(Error::invalid(format!("preview supports 1-3 axes, sample has {d}"))),
    }
}

fn to_byte(v: f64, lo: f64, hi: f64) -> u8 {
    if hi > lo {
        (255.0 * ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).round() as u8
    } else {
        0
    }
}

/// Side-by-side greyscale montage with one-pixel white separators. Clean and
/// corrupted share one intensity window; labels map `[0, 1]` to black..white.
pub fn montage(clean: &Tensor, corrupted: &Tensor, label: &Tensor) -> Result<Raster> {
    clean.require_same_shape(corrupted)?;
    clean.require_same_shape(label)?;
    if clean.ndim() != 2 {
        return Err(Error::invalid("montage needs 2-d planes"));
    }
    let (h, w) = (clean.shape()[0], clean.shape()[1]);
    let lo = clean.min().min(corrupted.min());
    let hi = clean.max().max(corrupted.max());
    let width = 3 * w + 2;
    let mut pixels = vec![255u8; width * h];
    for r in 0..h {
        for c in 0..w {
            let k = r * w + c;
            let row = r * width;
            pixels[row + c] = to_byte(clean.data()[k], lo, hi);
            pixels[row + w + 1 + c] = to_byte(corrupted.data()[k], lo, hi);
            pixels[row + 2 * w + 2 + c] = to_byte(label.data()[k], 0.0, 1.0);
        }
    }
    Ok(Raster {
        width,
        height: h,
        channels: 1,
        pixels,
    })
}

/// Values along `axis` through `point`.
pub fn line_profile(t: &Tensor, point: &[usize], axis: usize) -> Result<Vec<f64>> {
    if point.len() != t.ndim() || axis >= t.ndim() {
        return Err(Error::invalid("profile point or axis does not match the tensor"));
    }
    if point.iter().zip(t.shape()).any(|(&p, &n)| p >= n) {
        return Err(Error::invalid(format!("profile point {point:?} outside {:?}", t.shape())));
    }
    let mut idx = point.to_vec();
    Ok((0..t.shape()[axis])
        .map(|i| {
            idx[axis] = i;
            *t.get(&idx)
        })
        .collect())
}

const PLOT_HEIGHT: usize = 128;
const PLOT_SCALE: usize = 4;

/// Line plot of clean (grey) and corrupted (red) intensities on a shared
/// axis, with the label (blue) on `[0, 1]`.
pub fn profile_plot(clean: &[f64], corrupted: &[f64], label: &[f64]) -> Result<Raster> {
    if clean.len() != corrupted.len() || clean.len() != label.len() || clean.is_empty() {
        return Err(Error::invalid("profiles must be non-empty and of equal length"));
    }
    let width = clean.len() * PLOT_SCALE;
    let mut rgb = vec![255u8; 3 * width * PLOT_HEIGHT];
    let lo = clean.iter().chain(corrupted).copied().fold(f64::INFINITY, f64::min);
    let hi = clean.iter().chain(corrupted).copied().fold(f64::NEG_INFINITY, f64::max);
    let series: [(&[f64], f64, f64, [u8; 3]); 3] = [
        (clean, lo, hi, [128, 128, 128]),
        (label, 0.0, 1.0, [40, 40, 220]),
        (corrupted, lo, hi, [220, 40, 40]),
    ];
    let y_of = |v: f64, lo: f64, hi: f64| -> usize {
        let f = if hi > lo { ((v - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.5 };
        ((1.0 - f) * (PLOT_HEIGHT - 1) as f64).round() as usize
    };
    for (values, lo, hi, colour) in series {
        let mut prev: Option<usize> = None;
        for x in 0..width {
            let t = (x as f64 + 0.5) / PLOT_SCALE as f64 - 0.5;
            let i = (t.floor().max(0.0) as usize).min(values.len() - 1);
            let j = (i + 1).min(values.len() - 1);
            let f = (t - i as f64).clamp(0.0, 1.0);
            let y = y_of(values[i] * (1.0 - f) + values[j] * f, lo, hi);
            let (a, b) = match prev {
                Some(p) => (p.min(y), p.max(y)),
                None => (y, y),
            };
            for yy in a..=b {
                let k = 3 * (yy * width + x);
                rgb[k..k + 3].copy_from_slice(&colour);
            }
            prev = Some(y);
        }
    }
    Ok(Raster {
        width,
        height: PLOT_HEIGHT,
        channels: 3,
        pixels: rgb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn montage_layout() {
        let clean = Tensor::new(&[2, 3], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let corrupted = clean.map(|v| v * 2.0);
        let label = Tensor::new(&[2, 3], vec![0.0, 0.5, 1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = montage(&clean, &corrupted, &label).unwrap();
        assert_eq!((m.width, m.height), (11, 2));
        assert_eq!(m.pixels[3], 255);
        assert_eq!(m.pixels[7], 255);
        // shared window [0, 10]
        assert_eq!(m.pixels[2], 51);
        assert_eq!(m.pixels[4 + 2], 102);
        assert_eq!(&m.pixels[8..11], &[0, 128, 255]);
        let pgm = m.to_netpbm();
        assert!(pgm.starts_with(b"P5\n11 2\n255\n"));
    }

    #[test]
    fn planes() {
        let v = Tensor::from_fn(&[3, 2, 2], |i| (i[0] * 4 + i[1] * 2 + i[2]) as f64).unwrap();
        assert_eq!(plane(&v, Some(1)).unwrap().data(), &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(plane(&v, None).unwrap().data(), &[4.0, 5.0, 6.0, 7.0]);
        assert!(plane(&v, Some(3)).is_err());
        let s = Tensor::new(&[4], vec![1.0; 4]).unwrap();
        assert_eq!(plane(&s, None).unwrap().shape(), &[1, 4]);
        assert!(plane(&s, Some(2)).is_err());
        assert!(plane(&Tensor::zeros(&[1, 1, 1, 1]).unwrap(), None).is_err());
    }

    #[test]
    fn profiles() {
        let t = Tensor::from_fn(&[3, 4], |i| (10 * i[0] + i[1]) as f64).unwrap();
        assert_eq!(line_profile(&t, &[1, 2], 1).unwrap(), vec![10.0, 11.0, 12.0, 13.0]);
        assert_eq!(line_profile(&t, &[1, 2], 0).unwrap(), vec![2.0, 12.0, 22.0]);
        assert!(line_profile(&t, &[3, 0], 0).is_err());
        let p = profile_plot(&[0.0, 1.0], &[0.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!((p.width, p.height, p.pixels.len()), (8, PLOT_HEIGHT, 3 * 8 * PLOT_HEIGHT));
        assert!(p.to_netpbm().starts_with(b"P6\n8 128\n255\n"));
    }
}
