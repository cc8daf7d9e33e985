//! Thin n-dimensional wrapper over `rustfft`.
//!
//! Axis-by-axis complex transforms on row-major buffers. Plans are cached per
//! thread by the planner; callers never see plan objects.

use num_complex::Complex64;
use rustfft::{FftDirection, FftPlanner};
use std::cell::RefCell;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Unnormalized in-place transform over every axis of a row-major array.
pub(crate) fn fft_nd(data: &mut [Complex64], shape: &[usize], direction: FftDirection) {
    debug_assert_eq!(data.len(), shape.iter().product::<usize>());
    let total = data.len();
    for (axis, &len) in shape.iter().enumerate() {
        if len <= 1 {
            continue;
        }
        let stride: usize = shape[axis + 1..].iter().product();
        let fft = PLANNER.with(|p| p.borrow_mut().plan_fft(len, direction));
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        if stride == 1 {
            for line in data.chunks_exact_mut(len) {
                fft.process_with_scratch(line, &mut scratch);
            }
            continue;
        }
        let mut line = vec![Complex64::default(); len];
        let block = len * stride;
        for outer in (0..total).step_by(block) {
            for inner in 0..stride {
                let base = outer + inner;
                for (k, slot) in line.iter_mut().enumerate() {
                    *slot = data[base + k * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (k, v) in line.iter().enumerate() {
                    data[base + k * stride] = *v;
                }
            }
        }
    }
}

/// Forward transform of real data, normalized by 1/len.
pub(crate) fn forward_real(values: &[f64], shape: &[usize]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, shape, FftDirection::Forward);
    let scale = 1.0 / values.len() as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Inverse of [`forward_real`]; returns the real part.
pub(crate) fn inverse_real(coeffs: &[Complex64], shape: &[usize]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    fft_nd(&mut buf, shape, FftDirection::Inverse);
    buf.into_iter().map(|c| c.re).collect()
}

/// Signed integer wavenumber of FFT index `k` on an axis of length `n`.
/// Index n/2 maps to -n/2.
#[inline]
pub(crate) fn signed_index(k: usize, n: usize) -> i64 {
    if k < n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}
