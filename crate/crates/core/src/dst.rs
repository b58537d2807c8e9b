//! Type-I discrete sine transform along one axis of a tensor.
//!
//! Forward: `y_k = sum_n x_n sin(pi (n+1)(k+1) / (N+1))`. The inverse is the
//! same kernel scaled by `2 / (N+1)`. Short axes use the direct sum with a
//! precomputed sine table; long axes go through an FFT of the odd extension
//! of length `2(N+1)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const FFT_MIN_LEN: usize = 32;

pub fn dst1_forward(x: &Tensor, axis: usize) -> Result<Tensor> {
    transform(x, axis, 1.0)
}

pub fn dst1_inverse(x: &Tensor, axis: usize) -> Result<Tensor> {
    let n = axis_len(x, axis)?;
    transform(x, axis, 2.0 / (n as f64 + 1.0))
}

/// Forward transform over every axis.
pub fn dst1_forward_all(x: &Tensor) -> Tensor {
    (0..x.ndim()).fold(x.clone(), |acc, axis| {
        transform(&acc, axis, 1.0).expect("axis in range")
    })
}

/// Inverse transform over every axis.
pub fn dst1_inverse_all(x: &Tensor) -> Tensor {
    (0..x.ndim()).fold(x.clone(), |acc, axis| {
        let n = acc.shape()[axis] as f64;
        transform(&acc, axis, 2.0 / (n + 1.0)).expect("axis in range")
    })
}

fn axis_len(x: &Tensor, axis: usize) -> Result<usize> {
    x.shape().get(axis).copied().ok_or_else(|| {
        Error::invalid(format!("axis {axis} out of range for {}-d tensor", x.ndim()))
    })
}

enum Kernel {
    Table(Vec<f64>),
    Fft {
        plan: Arc<dyn Fft<f64>>,
        buffer: Vec<Complex<f64>>,
        scratch: Vec<Complex<f64>>,
    },
}

impl Kernel {
    fn new(n: usize) -> Self {
        if n < FFT_MIN_LEN {
            let m = (n + 1) as f64;
            let mut table = Vec::with_capacity(n * n);
            for k in 0..n {
                for j in 0..n {
                    // reduce the product mod 2(N+1) so the argument stays small
                    let phase = ((j + 1) * (k + 1)) % (2 * (n + 1));
                    table.push((PI * phase as f64 / m).sin());
                }
            }
            Kernel::Table(table)
        } else {
            let len = 2 * (n + 1);
            let plan = FftPlanner::new().plan_fft_forward(len);
            let scratch = vec![Complex::default(); plan.get_inplace_scratch_len()];
            Kernel::Fft {
                plan,
                buffer: vec![Complex::default(); len],
                scratch,
            }
        }
    }

    fn apply(&mut self, line: &[f64], out: &mut [f64], scale: f64) {
        let n = line.len();
        match self {
            Kernel::Table(table) => {
                for (k, o) in out.iter_mut().enumerate() {
                    let row = &table[k * n..(k + 1) * n];
                    *o = scale * row.iter().zip(line).map(|(s, v)| s * v).sum::<f64>();
                }
            }
            Kernel::Fft {
                plan,
                buffer,
                scratch,
            } => {
                let len = buffer.len();
                buffer.fill(Complex::default());
                for (j, &v) in line.iter().enumerate() {
                    buffer[j + 1] = Complex::new(v, 0.0);
                    buffer[len - j - 1] = Complex::new(-v, 0.0);
                }
                plan.process_with_scratch(buffer, scratch);
                for (k, o) in out.iter_mut().enumerate() {
                    *o = -0.5 * scale * buffer[k + 1].im;
                }
            }
        }
    }
}

fn transform(x: &Tensor, axis: usize, scale: f64) -> Result<Tensor> {
    let n = axis_len(x, axis)?;
    let stride: usize = x.shape()[axis + 1..].iter().product();
    let outer: usize = x.shape()[..axis].iter().product();
    let mut kernel = Kernel::new(n);
    let src = x.data();
    let mut out = vec![0.0; src.len()];
    let mut line = vec![0.0; n];
    let mut result = vec![0.0; n];
    for o in 0..outer {
        let base = o * n * stride;
        for s in 0..stride {
            for (j, v) in line.iter_mut().enumerate() {
                *v = src[base + j * stride + s];
            }
            kernel.apply(&line, &mut result, scale);
            for (j, v) in result.iter().enumerate() {
                out[base + j * stride + s] = *v;
            }
        }
    }
    Tensor::from_shape_vec(x.shape(), out)
}
