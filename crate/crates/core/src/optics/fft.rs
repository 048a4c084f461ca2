//! Planned 2-D FFTs over row-major buffers.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftDirection, FftPlanner};

#[derive(Clone)]
pub(crate) struct Fft2 {
    nx: usize,
    ny: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub(crate) fn new(nx: usize, ny: usize, direction: FftDirection) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            rows: planner.plan_fft(nx, direction),
            cols: planner.plan_fft(ny, direction),
        }
    }

    /// Unnormalized transform of `data` (shape `ny`×`nx`, row-major) in place.
    pub(crate) fn process(&self, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.nx * self.ny);
        run_rows(&self.rows, data, self.nx);
        let mut t = transpose(data, self.nx, self.ny);
        run_rows(&self.cols, &mut t, self.ny);
        transpose_into(&t, data, self.ny, self.nx);
    }
}

fn run_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], len: usize) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

fn transpose(src: &[Complex64], cols: usize, rows: usize) -> Vec<Complex64> {
    let mut dst = vec![Complex64::default(); src.len()];
    transpose_into(src, &mut dst, cols, rows);
    dst
}

/// `src` is `rows`×`cols`; `dst` becomes `cols`×`rows`.
fn transpose_into(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const B: usize = 32;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}
