//! Multidimensional complex FFTs over row-major arrays (last axis contiguous).

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct FftNd {
    dims: Vec<usize>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl FftNd {
    pub fn new(dims: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        FftNd {
            dims: dims.to_vec(),
            forward: dims.iter().map(|&n| planner.plan_fft_forward(n)).collect(),
            inverse: dims.iter().map(|&n| planner.plan_fft_inverse(n)).collect(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.forward);
    }

    /// Inverse transform in place, normalized so that `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inverse);
        let scale = 1.0 / self.len() as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>]) {
        assert_eq!(data.len(), self.len(), "FFT buffer length mismatch");
        let nd = self.dims.len();
        let mut stride = 1;
        for axis in (0..nd).rev() {
            let n = self.dims[axis];
            let plan = &plans[axis];
            if n > 1 {
                if stride == 1 {
                    plan.process(data);
                } else {
                    let block = n * stride;
                    let mut line = vec![Complex64::default(); n];
                    let mut scratch = vec![Complex64::default(); plan.get_inplace_scratch_len()];
                    for chunk in data.chunks_mut(block) {
                        for off in 0..stride {
                            for k in 0..n {
                                line[k] = chunk[off + k * stride];
                            }
                            plan.process_with_scratch(&mut line, &mut scratch);
                            for k in 0..n {
                                chunk[off + k * stride] = line[k];
                            }
                        }
                    }
                }
            }
            stride *= n;
        }
    }
}

/// Angular wavenumbers `2πk/(n h)` in FFT order.
pub fn wavenumbers(n: usize, h: f64) -> Vec<f64> {
    let scale = 2.0 * PI / (n as f64 * h);
    (0..n)
        .map(|k| {
            let k = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
            k * scale
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_3d() {
        let dims = [4, 6, 5];
        let fft = FftNd::new(&dims);
        let orig: Vec<Complex64> =
            (0..fft.len()).map(|i| Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let mut data = orig.clone();
        fft.forward(&mut data);
        fft.inverse(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_plane_wave() {
        let (nx, ny) = (16, 8);
        let h = 0.5;
        let fft = FftNd::new(&[nx, ny]);
        let kx = wavenumbers(nx, h);
        let q = 2.0 * PI * 3.0 / (nx as f64 * h);
        let mut data: Vec<Complex64> = (0..nx * ny)
            .map(|i| Complex64::from_polar(1.0, q * (i / ny) as f64 * h))
            .collect();
        let orig = data.clone();
        fft.forward(&mut data);
        for i in 0..nx {
            for j in 0..ny {
                data[i * ny + j] *= Complex64::new(0.0, kx[i]);
            }
        }
        fft.inverse(&mut data);
        for (d, o) in data.iter().zip(&orig) {
            assert!((d - o * Complex64::new(0.0, q)).norm() < 1e-10);
        }
    }
}
