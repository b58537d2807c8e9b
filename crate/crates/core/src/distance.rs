//! Exact Euclidean distance transform (separable lower-envelope method).

use crate::tensor::Tensor;

/// Distance from every voxel to the nearest voxel where `inside` is false.
///
/// Voxels outside the region get 0. If the region fills the whole grid every
/// distance is infinite.
pub fn distance_to_outside(inside: &Tensor<bool>) -> Tensor {
    let mut sq = inside.map(|&b| if b { f64::INFINITY } else { 0.0 });
    let shape = inside.shape().to_vec();
    let strides = inside.strides();
    for axis in 0..shape.len() {
        let n = shape[axis];
        let stride = strides[axis];
        let outer: usize = shape[..axis].iter().product();
        let mut line = vec![0.0; n];
        let mut out = vec![0.0; n];
        let mut env = Envelope::with_capacity(n);
        let data = sq.data_mut();
        for o in 0..outer {
            let base = o * n * stride;
            for s in 0..stride {
                for (j, v) in line.iter_mut().enumerate() {
                    *v = data[base + j * stride + s];
                }
                env.transform(&line, &mut out);
                for (j, v) in out.iter().enumerate() {
                    data[base + j * stride + s] = *v;
                }
            }
        }
    }
    sq.map(|v| v.sqrt())
}

struct Envelope {
    sites: Vec<usize>,
    bounds: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            bounds: Vec::with_capacity(n),
        }
    }

    /// 1-D squared distance transform of sampled function `f`.
    fn transform(&mut self, f: &[f64], out: &mut [f64]) {
        self.sites.clear();
        self.bounds.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            let qf = q as f64;
            loop {
                let Some(&p) = self.sites.last() else {
                    self.sites.push(q);
                    self.bounds.push(f64::NEG_INFINITY);
                    break;
                };
                let pf = p as f64;
                let s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
                if s <= *self.bounds.last().expect("parallel to sites") {
                    self.sites.pop();
                    self.bounds.pop();
                    continue;
                }
                self.sites.push(q);
                self.bounds.push(s);
                break;
            }
        }
        if self.sites.is_empty() {
            out.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, o) in out.iter_mut().enumerate() {
            let qf = q as f64;
            while k + 1 < self.sites.len() && self.bounds[k + 1] < qf {
                k += 1;
            }
            let p = self.sites[k];
            let dq = qf - p as f64;
            *o = dq * dq + f[p];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::for_each_index;
    use rand::Rng;

    fn brute(inside: &Tensor<bool>) -> Tensor {
        let outside: Vec<Vec<usize>> = (0..inside.len())
            .filter(|&k| !inside.data()[k])
            .map(|k| inside.unravel(k))
            .collect();
        Tensor::from_fn(inside.shape(), |p| {
            outside
                .iter()
                .map(|q| {
                    p.iter()
                        .zip(q)
                        .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt()
        })
        .unwrap()
    }

    #[test]
    fn matches_brute_force() {
        for (shape, seed) in [(vec![13usize], 1u64), (vec![9, 11], 2), (vec![5, 6, 7], 3)] {
            let mut rng = RngStream::new(seed, 0);
            let inside = Tensor::from_fn(&shape, |_| rng.gen_bool(0.8)).unwrap();
            let fast = distance_to_outside(&inside);
            let slow = brute(&inside);
            for_each_index(&shape, |p| {
                assert!((fast.get(p) - slow.get(p)).abs() < 1e-12, "{p:?}");
            });
        }
    }

    #[test]
    fn full_region_is_infinite() {
        let inside = Tensor::filled(&[4, 4], true).unwrap();
        assert!(distance_to_outside(&inside).data().iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn square_interior() {
        let inside = Tensor::from_fn(&[7, 7], |i| (1..6).contains(&i[0]) && (1..6).contains(&i[1])).unwrap();
        let d = distance_to_outside(&inside);
        assert_eq!(*d.get(&[0, 0]), 0.0);
        assert_eq!(*d.get(&[1, 1]), 1.0);
        assert_eq!(*d.get(&[3, 3]), 3.0);
    }
}
