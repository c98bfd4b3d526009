//! Two-dimensional complex FFTs on row-major (x-fastest) buffers.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest length `>= n` whose only prime factors are 2, 3 and 5.
pub fn next_fast_len(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r.is_multiple_of(p) {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}

/// Planned forward and inverse 2D transforms of an `nx` by `ny` array.
///
/// Transforms are unnormalised, matching `rustfft`: the forward kernel is
/// `exp(-2 pi i jk / n)` and the inverse kernel `exp(+2 pi i jk / n)`.
pub struct Fft2 {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            nx,
            ny,
            fwd_x: planner.plan_fft_forward(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_x: planner.plan_fft_inverse(nx),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Forward transform, leaving the result in transposed (y-fastest) layout.
    ///
    /// Pointwise products between arrays in the same layout are unaffected by
    /// the transpose, which saves two passes per convolution.
    pub fn forward_transposed(&self, buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.nx * self.ny);
        self.fwd_x.process(buf);
        transpose(buf, scratch, self.nx, self.ny);
        std::mem::swap(buf, scratch);
        self.fwd_y.process(buf);
    }

    /// Inverse of [`Fft2::forward_transposed`]: input in y-fastest layout,
    /// output back in x-fastest layout.
    pub fn inverse_transposed(&self, buf: &mut Vec<Complex64>, scratch: &mut Vec<Complex64>) {
        debug_assert_eq!(buf.len(), self.nx * self.ny);
        self.inv_y.process(buf);
        transpose(buf, scratch, self.ny, self.nx);
        std::mem::swap(buf, scratch);
        self.inv_x.process(buf);
    }

    /// Forward transform in natural (x-fastest) layout.
    pub fn forward(&self, buf: &mut Vec<Complex64>) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); buf.len()];
        self.forward_transposed(buf, &mut scratch);
        transpose(buf, &mut scratch, self.ny, self.nx);
        std::mem::swap(buf, &mut scratch);
    }

    /// Inverse transform in natural (x-fastest) layout, unnormalised.
    pub fn inverse(&self, buf: &mut Vec<Complex64>) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); buf.len()];
        transpose(buf, &mut scratch, self.nx, self.ny);
        std::mem::swap(buf, &mut scratch);
        self.inverse_transposed(buf, &mut scratch);
    }
}

/// Transposes a row-major `rows` x `cols` matrix (`cols` fastest) into `out`.
fn transpose(src: &[Complex64], out: &mut Vec<Complex64>, cols: usize, rows: usize) {
    out.resize(src.len(), Complex64::new(0.0, 0.0));
    const B: usize = 32;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    out[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
