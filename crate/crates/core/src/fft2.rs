//! Square 2D complex FFT built from row transforms and in-place transposes.
//!
//! Forward output is stored transposed: `spec[k1 * n + k2]` for input
//! `data[j * n + i]` (row `j` is the x2 index, column `i` the x1 index).
//! The inverse takes the transposed layout back to the natural one.
//! No normalization is applied in either direction.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft2 {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        Self { n, fwd, inv, scratch_len }
    }

    fn rows(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64], rows: usize) {
        if rows == 0 {
            return;
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        plan.process_with_scratch(&mut data[..rows * self.n], &mut scratch);
    }

    /// Forward transform; only the first `live_rows` input rows may be nonzero.
    pub fn forward(&self, data: &mut [Complex64], live_rows: usize) {
        self.rows(&self.fwd, data, live_rows);
        transpose(data, self.n);
        self.rows(&self.fwd, data, self.n);
    }

    /// Inverse transform; only the first `keep_rows` output rows are valid.
    pub fn inverse(&self, data: &mut [Complex64], keep_rows: usize) {
        self.rows(&self.inv, data, self.n);
        transpose(data, self.n);
        self.rows(&self.inv, data, keep_rows);
    }
}

fn transpose(a: &mut [Complex64], n: usize) {
    const B: usize = 32;
    for bi in (0..n).step_by(B) {
        for bj in (bi..n).step_by(B) {
            for i in bi..(bi + B).min(n) {
                let j0 = if bi == bj { i + 1 } else { bj };
                for j in j0..(bj + B).min(n) {
                    a.swap(i * n + j, j * n + i);
                }
            }
        }
    }
}

/// Signed integer wavenumber of FFT bin `k` on `n` points.
#[inline]
pub fn wavenumber(k: usize, n: usize) -> f64 {
    if k <= n / 2 {
        k as f64
    } else {
        k as f64 - n as f64
    }
}
