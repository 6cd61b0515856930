//! Two-dimensional FFT plumbing over `rustfft`.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward and inverse plans for one `(rows, cols)` shape. Unnormalized in
/// both directions, like `rustfft`.
#[derive(Clone)]
pub(crate) struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.row_inv, &self.col_inv);
    }

    #[cfg(test)]
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    fn apply(&self, data: &mut Array2<Complex64>, row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.dim(), (self.rows, self.cols));
        let flat = data
            .as_slice_mut()
            .expect("FFT buffers are contiguous row-major");
        if self.cols > 1 {
            row.process(flat);
        }
        if self.rows > 1 {
            let mut column = vec![Complex64::default(); self.rows];
            let mut scratch = vec![Complex64::default(); col.get_inplace_scratch_len()];
            for c in 0..self.cols {
                for r in 0..self.rows {
                    column[r] = flat[r * self.cols + c];
                }
                col.process_with_scratch(&mut column, &mut scratch);
                for r in 0..self.rows {
                    flat[r * self.cols + c] = column[r];
                }
            }
        }
    }
}

/// DFT sample frequencies in cycles per unit length, numpy `fftfreq` order.
pub(crate) fn frequencies(n: usize, spacing: f64) -> Vec<f64> {
    let scale = 1.0 / (n as f64 * spacing);
    (0..n)
        .map(|k| {
            let k = if k <= (n - 1) / 2 { k as f64 } else { k as f64 - n as f64 };
            k * scale
        })
        .collect()
}

/// Smallest integer `>= n` whose only prime factors are 2, 3 and 5.
pub(crate) fn next_smooth(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 1;
    }
}
