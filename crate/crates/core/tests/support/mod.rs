//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use synthanom::{RngStream, Tensor};

/// Direct solve of the discrete Dirichlet Poisson system by banded Gaussian
/// elimination. Unknowns are the interior voxels in row-major order; the
/// half-bandwidth is the largest interior stride.
pub fn banded_dirichlet(rhs: &Tensor, frame: &Tensor) -> Tensor {
    let shape = rhs.shape().to_vec();
    let d = shape.len();
    let n = rhs.len();
    let mut strides = vec![1usize; d];
    for k in (0..d.saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    let bw = strides[0].max(1);
    let width = 2 * bw + 1;
    let mut band = vec![0.0f64; n * width];
    let at = |i: usize, j: usize| i * width + (j + bw - i);
    let mut b = rhs.data().to_vec();
    for i in 0..n {
        let idx = rhs.unravel(i);
        band[at(i, i)] = -2.0 * d as f64;
        for k in 0..d {
            for step in [-1isize, 1] {
                let m = idx[k] as isize + step;
                if m < 0 || m >= shape[k] as isize {
                    let mut f: Vec<usize> = idx.iter().map(|v| v + 1).collect();
                    f[k] = (m + 1) as usize;
                    b[i] -= *frame.get(&f);
                } else {
                    let j = (i as isize + step * strides[k] as isize) as usize;
                    band[at(i, j)] = 1.0;
                }
            }
        }
    }
    // the matrix is symmetric negative definite, so no pivoting is needed
    for k in 0..n {
        let pivot = band[at(k, k)];
        for i in k + 1..(k + bw + 1).min(n) {
            let factor = band[at(i, k)] / pivot;
            if factor == 0.0 {
                continue;
            }
            for j in k..(k + bw + 1).min(n) {
                band[at(i, j)] -= factor * band[at(k, j)];
            }
            b[i] -= factor * b[k];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..(i + bw + 1).min(n) {
            s -= band[at(i, j)] * x[j];
        }
        x[i] = s / band[at(i, i)];
    }
    Tensor::new(&shape, x).unwrap()
}

/// `S_k = sum_n x_n sin(pi (n + 1)(k + 1) / (N + 1))` along one axis.
pub fn naive_dst(x: &Tensor, axis: usize) -> Tensor {
    let n = x.shape()[axis];
    Tensor::from_fn(x.shape(), |idx| {
        let mut src = idx.to_vec();
        (0..n)
            .map(|j| {
                src[axis] = j;
                let arg = std::f64::consts::PI * ((j + 1) * (idx[axis] + 1)) as f64 / (n + 1) as f64;
                x.get(&src) * arg.sin()
            })
            .sum()
    })
    .unwrap()
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Exact fraction `num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn new(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        Ratio {
            num: num / g,
            den: den / g,
        }
    }

    pub fn add(self, o: Ratio) -> Ratio {
        Ratio::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Average precision as an exact fraction: at every distinct score, taken in
/// descending order, add precision times the recall gained there.
pub fn brute_ap(scores: &[f64], targets: &[bool]) -> Option<Ratio> {
    let p = targets.iter().filter(|&&t| t).count() as u128;
    if p == 0 {
        return None;
    }
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let mut ap = Ratio::new(0, 1);
    let mut prev_tp = 0u128;
    for t in thresholds {
        let tp = scores.iter().zip(targets).filter(|(&s, &y)| s >= t && y).count() as u128;
        let k = scores.iter().filter(|&&s| s >= t).count() as u128;
        if tp > prev_tp {
            ap = ap.add(Ratio::new((tp - prev_tp) * tp, p * k));
        }
        prev_tp = tp;
    }
    Some(ap)
}

/// AUROC by comparing every positive with every negative, ties count half.
pub fn brute_auroc(scores: &[f64], targets: &[bool]) -> Option<Ratio> {
    let p = targets.iter().filter(|&&t| t).count() as u128;
    let n = targets.len() as u128 - p;
    if p == 0 || n == 0 {
        return None;
    }
    let mut twice = 0u128;
    for (i, &si) in scores.iter().enumerate() {
        if !targets[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if targets[j] {
                continue;
            }
            twice += if si > sj {
                2
            } else if si == sj {
                1
            } else {
                0
            };
        }
    }
    Some(Ratio::new(twice, 2 * p * n))
}

/// Textured ellipsoidal "organ" on a zero background, roughly half of the
/// image. Values are f32-exact so they survive a file round trip.
pub fn phantom(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = RngStream::new(seed, 0xfeed);
    let centre: Vec<f64> = shape
        .iter()
        .map(|&n| (n as f64 - 1.0) / 2.0 + rng.gen_range(-0.05..0.05) * n as f64)
        .collect();
    let radii: Vec<f64> = shape.iter().map(|&n| rng.gen_range(0.38..0.45) * n as f64).collect();
    let freq: Vec<f64> = shape.iter().map(|_| rng.gen_range(0.1..0.4)).collect();
    let phase: f64 = rng.gen_range(0.0..6.0);
    let mut noise = RngStream::new(seed, 0xbeef);
    Tensor::from_fn(shape, |i| {
        let r2: f64 = i
            .iter()
            .zip(&centre)
            .zip(&radii)
            .map(|((&v, c), r)| ((v as f64 - c) / r).powi(2))
            .sum();
        let n: f64 = noise.gen_range(-0.05..0.05);
        if r2 < 1.0 {
            let tex: f64 = i.iter().zip(&freq).map(|(&v, f)| (v as f64 * f + phase).sin()).sum();
            ((1.0 + 0.2 * tex + 0.3 * (1.0 - r2) + n) as f32) as f64
        } else {
            0.0
        }
    })
    .unwrap()
}

pub fn random_tensor(shape: &[usize], rng: &mut RngStream) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0)).unwrap()
}
