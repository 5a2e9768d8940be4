//! Unitary 2D DFT pair mapping channel grids to the delay-Doppler domain.
//!
//! `forward` computes `F_m{F_n^-1{H}}`: an inverse DFT along subcarriers and
//! a forward DFT along symbols, both zero-padded to the output size and
//! scaled by `1/sqrt(len)`. `adjoint` is its exact adjoint
//! `F_m^-1{F_n{X}}`, cropped back to the grid size.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const BLOCK: usize = 16;

/// Columns gathered per batch of 1D transforms; a batch stays in cache.
const LANES: usize = 16;

pub(crate) fn transpose(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    // inner loop walks destination rows contiguously
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for c in c0..(c0 + BLOCK).min(cols) {
                for r in r0..(r0 + BLOCK).min(rows) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

pub struct DelayDopplerTransform {
    grid: (usize, usize),
    out: (usize, usize),
    fft_n: Arc<dyn Fft<f64>>,
    ifft_n: Arc<dyn Fft<f64>>,
    fft_m: Arc<dyn Fft<f64>>,
    ifft_m: Arc<dyn Fft<f64>>,
    /// `LANES` columns of the longer axis.
    lanes: Vec<Complex64>,
    /// `n_sc x m` staging plane.
    rows: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl std::fmt::Debug for DelayDopplerTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DelayDopplerTransform")
            .field("grid", &self.grid)
            .field("out", &self.out)
            .finish()
    }
}

impl DelayDopplerTransform {
    /// Transform between an `n_sc x n_sy` grid and an `n x m` delay-Doppler plane.
    ///
    /// Panics if `n < n_sc` or `m < n_sy`.
    pub fn new(n_sc: usize, n_sy: usize, n: usize, m: usize) -> Self {
        assert!(n >= n_sc && m >= n_sy, "output must be at least the grid size");
        let mut planner = FftPlanner::new();
        let fft_n = planner.plan_fft_forward(n);
        let ifft_n = planner.plan_fft_inverse(n);
        let fft_m = planner.plan_fft_forward(m);
        let ifft_m = planner.plan_fft_inverse(m);
        let scratch_len = [&fft_n, &ifft_n, &fft_m, &ifft_m]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        DelayDopplerTransform {
            grid: (n_sc, n_sy),
            out: (n, m),
            fft_n,
            ifft_n,
            fft_m,
            ifft_m,
            lanes: vec![Complex64::default(); LANES * n.max(m)],
            rows: vec![Complex64::default(); n_sc * m],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        self.grid
    }

    pub fn output_dims(&self) -> (usize, usize) {
        self.out
    }

    fn scale(&self) -> f64 {
        1.0 / ((self.out.0 * self.out.1) as f64).sqrt()
    }

    /// `F_m{F_n^-1{h}}` for an `n_sc x n_sy` input, written transposed:
    /// `out_t[l * n + k]` holds delay bin `k`, Doppler bin `l`.
    pub fn forward_transposed(&mut self, h: &[Complex64], out_t: &mut [Complex64]) {
        let (n_sc, n_sy) = self.grid;
        let (n, m) = self.out;
        assert_eq!(h.len(), n_sc * n_sy);
        assert_eq!(out_t.len(), n * m);
        let scale = self.scale();

        // Forward DFT along symbols on a zero-padded copy of the grid.
        let stage = &mut self.rows[..];
        if m == n_sy {
            stage.copy_from_slice(h);
        } else {
            for (dst, src) in stage.chunks_exact_mut(m).zip(h.chunks_exact(n_sy)) {
                dst[..n_sy].copy_from_slice(src);
                dst[n_sy..].fill(Complex64::default());
            }
        }
        self.fft_m.process_with_scratch(stage, &mut self.scratch);

        // Inverse DFT along subcarriers, `LANES` Doppler columns at a time;
        // each finished lane is a contiguous row of `out_t`.
        for l0 in (0..m).step_by(LANES) {
            let w = LANES.min(m - l0);
            let lanes = &mut self.lanes[..w * n];
            for k0 in (0..n_sc).step_by(BLOCK) {
                let kw = BLOCK.min(n_sc - k0);
                for j in 0..w {
                    let dst = &mut lanes[j * n + k0..j * n + k0 + kw];
                    for (i, d) in dst.iter_mut().enumerate() {
                        *d = stage[(k0 + i) * m + l0 + j];
                    }
                }
            }
            if n > n_sc {
                for row in lanes.chunks_exact_mut(n) {
                    row[n_sc..].fill(Complex64::default());
                }
            }
            self.ifft_n.process_with_scratch(lanes, &mut self.scratch);
            for (d, s) in out_t[l0 * n..(l0 + w) * n].iter_mut().zip(lanes.iter()) {
                *d = *s * scale;
            }
        }
    }

    /// Adjoint of [`forward_transposed`](Self::forward_transposed): reads a
    /// transposed `m x n` plane, writes an `n_sc x n_sy` grid.
    pub fn adjoint_transposed(&mut self, x_t: &[Complex64], out: &mut [Complex64]) {
        let (n_sc, n_sy) = self.grid;
        let (n, m) = self.out;
        assert_eq!(x_t.len(), n * m);
        assert_eq!(out.len(), n_sc * n_sy);
        let scale = self.scale();

        // Without Doppler padding the symbol transform runs in `out` itself.
        let stage: &mut [Complex64] = if m == n_sy { &mut *out } else { &mut self.rows[..] };

        // Forward DFT along delay on `LANES` Doppler rows at a time, cropped
        // to `n_sc` and scattered into subcarrier-major rows.
        for l0 in (0..m).step_by(LANES) {
            let w = LANES.min(m - l0);
            let lanes = &mut self.lanes[..w * n];
            for (d, s) in lanes.iter_mut().zip(&x_t[l0 * n..(l0 + w) * n]) {
                *d = *s * scale;
            }
            self.fft_n.process_with_scratch(lanes, &mut self.scratch);
            for (k, dst) in stage.chunks_exact_mut(m).enumerate() {
                for (j, v) in dst[l0..l0 + w].iter_mut().enumerate() {
                    *v = lanes[j * n + k];
                }
            }
        }

        // Inverse DFT along symbols, then crop to `n_sy`.
        self.ifft_m.process_with_scratch(stage, &mut self.scratch);
        if m != n_sy {
            for (dst, src) in out.chunks_exact_mut(n_sy).zip(self.rows.chunks_exact(m)) {
                dst.copy_from_slice(&src[..n_sy]);
            }
        }
    }

    /// `F_m{F_n^-1{h}}` for an `n_sc x n_sy` input; writes an `n x m` output.
    pub fn forward_into(&mut self, h: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        assert_eq!(h.dim(), self.grid);
        assert_eq!(out.dim(), self.out);
        let (n, m) = self.out;
        let mut t = vec![Complex64::default(); n * m];
        self.forward_transposed(h.as_slice().expect("standard layout"), &mut t);
        transpose(&t, m, n, out.as_slice_mut().expect("standard layout"));
    }

    /// `F_m^-1{F_n{x}}` for an `n x m` input, cropped to `n_sc x n_sy`.
    pub fn adjoint_into(&mut self, x: &Array2<Complex64>, out: &mut Array2<Complex64>) {
        assert_eq!(x.dim(), self.out);
        assert_eq!(out.dim(), self.grid);
        let (n, m) = self.out;
        let mut t = vec![Complex64::default(); n * m];
        transpose(x.as_slice().expect("standard layout"), n, m, &mut t);
        self.adjoint_transposed(&t, out.as_slice_mut().expect("standard layout"));
    }

    pub fn forward(&mut self, h: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = Array2::zeros(self.out);
        self.forward_into(&h.as_standard_layout().to_owned(), &mut out);
        out
    }

    pub fn adjoint(&mut self, x: &Array2<Complex64>) -> Array2<Complex64> {
        let mut out = Array2::zeros(self.grid);
        self.adjoint_into(&x.as_standard_layout().to_owned(), &mut out);
        out
    }
}

/// Moves the zero-Doppler column to index `m / 2`.
pub fn fftshift_columns<T: Copy>(a: &Array2<T>) -> Array2<T> {
    let (n, m) = a.dim();
    let shift = m / 2;
    Array2::from_shape_fn((n, m), |(i, j)| a[[i, (j + m - shift) % m]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn pseudo_random(n: usize, m: usize, seed: u64) -> Array2<Complex64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        Array2::from_shape_fn((n, m), |_| {
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            };
            Complex64::new(next(), next())
        })
    }

    fn direct_forward(h: &Array2<Complex64>, n: usize, m: usize) -> Array2<Complex64> {
        let (n_sc, n_sy) = h.dim();
        let scale = 1.0 / ((n * m) as f64).sqrt();
        Array2::from_shape_fn((n, m), |(k, l)| {
            let mut acc = Complex64::default();
            for a in 0..n_sc {
                for b in 0..n_sy {
                    let phase = TAU * ((a * k) as f64 / n as f64 - (b * l) as f64 / m as f64);
                    acc += h[[a, b]] * Complex64::from_polar(1.0, phase);
                }
            }
            acc * scale
        })
    }

    #[test]
    fn forward_matches_direct_sum() {
        for &(n_sc, n_sy, n, m) in &[(8, 4, 8, 4), (6, 5, 12, 10), (7, 3, 9, 8)] {
            let h = pseudo_random(n_sc, n_sy, 3);
            let mut t = DelayDopplerTransform::new(n_sc, n_sy, n, m);
            let fast = t.forward(&h);
            let slow = direct_forward(&h, n, m);
            for (a, b) in fast.iter().zip(slow.iter()) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn adjoint_identity() {
        // <A h, x> == <h, A^H x>
        let (n_sc, n_sy, n, m) = (6, 4, 10, 8);
        let h = pseudo_random(n_sc, n_sy, 1);
        let x = pseudo_random(n, m, 2);
        let mut t = DelayDopplerTransform::new(n_sc, n_sy, n, m);
        let ah = t.forward(&h);
        let ahx = t.adjoint(&x);
        let lhs: Complex64 = ah.iter().zip(x.iter()).map(|(a, b)| a * b.conj()).sum();
        let rhs: Complex64 = h.iter().zip(ahx.iter()).map(|(a, b)| a * b.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn unpadded_round_trip() {
        let h = pseudo_random(12, 6, 9);
        let mut t = DelayDopplerTransform::new(12, 6, 12, 6);
        let back = {
            let x = t.forward(&h);
            t.adjoint(&x)
        };
        for (a, b) in h.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn shift_moves_zero_to_center() {
        let a = Array2::from_shape_fn((1, 5), |(_, j)| j);
        assert_eq!(fftshift_columns(&a).row(0).to_vec(), vec![3, 4, 0, 1, 2]);
        let b = Array2::from_shape_fn((1, 4), |(_, j)| j);
        assert_eq!(fftshift_columns(&b).row(0).to_vec(), vec![2, 3, 0, 1]);
    }
}
