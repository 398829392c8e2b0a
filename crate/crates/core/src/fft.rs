//! Multidimensional FFT on cubic grids `n^d`, row-major (last axis fastest).
//!
//! Each axis is transformed by running 1-D FFTs along the contiguous last
//! axis and then rotating the axes with a transpose, `d` times. Lines are
//! independent, so the result does not depend on the thread count.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

/// Lines per parallel task.
const LINES_PER_TASK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `X_k = Σ_j x_j exp(-2πi j·k/n)`
    Forward,
    /// `X_k = Σ_j x_j exp(+2πi j·k/n)`
    Inverse,
}

/// Below this many points the transform runs on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 14;

/// A planned d-dimensional transform over `n^d` points.
#[derive(Clone)]
pub struct NdFft {
    n: usize,
    d: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl NdFft {
    pub fn new(n: usize, d: usize, direction: Direction) -> Self {
        let dir = match direction {
            Direction::Forward => FftDirection::Forward,
            Direction::Inverse => FftDirection::Inverse,
        };
        NdFft {
            n,
            d,
            fft: FftPlanner::new().plan_fft(n, dir),
        }
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unnormalized in-place transform of `data`, which must hold `n^d` values.
    pub fn process(&self, data: &mut Vec<Complex64>) {
        let n = self.n;
        assert_eq!(data.len(), self.len(), "data length must be n^d");
        if n == 1 {
            return;
        }
        let parallel = data.len() >= PARALLEL_THRESHOLD;
        let scratch_len = self.fft.get_inplace_scratch_len();
        let mut rotated = vec![Complex64::new(0.0, 0.0); data.len()];
        for _ in 0..self.d {
            if parallel {
                data.par_chunks_mut(n * LINES_PER_TASK).for_each(|chunk| {
                    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
                    self.fft.process_with_scratch(chunk, &mut scratch);
                });
            } else {
                let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];
                self.fft.process_with_scratch(data, &mut scratch);
            }
            if self.d > 1 {
                rotate_axes(data, &mut rotated, n, parallel);
                std::mem::swap(data, &mut rotated);
            }
        }
    }
}

impl std::fmt::Debug for NdFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NdFft")
            .field("n", &self.n)
            .field("d", &self.d)
            .finish()
    }
}

/// Unnormalized in-place d-dimensional DFT of `data`, which must hold `n^d`
/// values.
pub fn fft_nd(data: &mut Vec<Complex64>, n: usize, d: usize, direction: Direction) {
    NdFft::new(n, d, direction).process(data);
}

/// Moves the last axis to the front: views `src` as an `(len/n) × n` matrix
/// and writes its transpose into `dst`.
fn rotate_axes(src: &[Complex64], dst: &mut [Complex64], n: usize, parallel: bool) {
    let rows = src.len() / n;
    let copy_row = |(j, out): (usize, &mut [Complex64])| {
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = src[r * n + j];
        }
    };
    if parallel {
        dst.par_chunks_mut(rows).enumerate().for_each(copy_row);
    } else {
        dst.chunks_mut(rows).enumerate().for_each(copy_row);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft(x: &[Complex64], n: usize, d: usize, sign: f64) -> Vec<Complex64> {
        let len = x.len();
        let idx = |mut lin: usize| {
            let mut k = vec![0usize; d];
            for a in (0..d).rev() {
                k[a] = lin % n;
                lin /= n;
            }
            k
        };
        (0..len)
            .map(|out| {
                let ko = idx(out);
                let mut acc = Complex64::new(0.0, 0.0);
                for (inp, v) in x.iter().enumerate() {
                    let ki = idx(inp);
                    let dot: usize = ko.iter().zip(&ki).map(|(a, b)| a * b).sum();
                    let phase = sign * 2.0 * std::f64::consts::PI * (dot % n) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, phase);
                }
                acc
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        for &(n, d) in &[(5usize, 1usize), (6, 2), (4, 3), (3, 3), (10, 2)] {
            let len = n.pow(d as u32);
            let x: Vec<Complex64> = (0..len)
                .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
                .collect();
            for (dir, sign) in [(Direction::Forward, -1.0), (Direction::Inverse, 1.0)] {
                let mut y = x.clone();
                fft_nd(&mut y, n, d, dir);
                let want = naive_dft(&x, n, d, sign);
                for (a, b) in y.iter().zip(&want) {
                    assert!((a - b).norm() < 1e-10, "n={n} d={d}");
                }
            }
        }
    }

    #[test]
    fn roundtrip_scales_by_len() {
        let n = 12;
        let d = 2;
        let x: Vec<Complex64> = (0..n * n)
            .map(|i| Complex64::new(i as f64, -(i as f64)))
            .collect();
        let mut y = x.clone();
        fft_nd(&mut y, n, d, Direction::Forward);
        fft_nd(&mut y, n, d, Direction::Inverse);
        for (a, b) in y.iter().zip(&x) {
            assert!((a / (n * n) as f64 - b).norm() < 1e-12);
        }
    }
}
