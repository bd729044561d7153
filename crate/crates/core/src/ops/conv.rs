//! Slice-level 1-D cross-correlation kernels shared by the tape operations.
//!
//! All routines follow the cross-correlation convention (no kernel flip):
//! `out[t] = sum_k kernel[k] * padded[t + k]`.

/// Zero-padding policy along the time axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Total padding `K - 1`, split floor left / ceil right; output length equals input length.
    Same,
    /// No padding; output length is `T - K + 1`.
    Valid,
}

impl Padding {
    /// `(left, right)` zero counts for a kernel of length `kernel_len`.
    pub fn amounts(self, kernel_len: usize) -> (usize, usize) {
        match self {
            Padding::Same => {
                let total = kernel_len - 1;
                (total / 2, total - total / 2)
            }
            Padding::Valid => (0, 0),
        }
    }

    pub fn output_len(self, input_len: usize, kernel_len: usize) -> usize {
        match self {
            Padding::Same => input_len,
            Padding::Valid => input_len + 1 - kernel_len,
        }
    }
}

/// Copies `row` into `buf` surrounded by `left` and `right` zeros.
pub fn pad_into(row: &[f64], left: usize, right: usize, buf: &mut Vec<f64>) {
    buf.clear();
    buf.resize(left, 0.0);
    buf.extend_from_slice(row);
    buf.resize(left + row.len() + right, 0.0);
}

/// Direct cross-correlation. Each `out[t]` is accumulated in ascending tap order.
pub fn correlate(padded: &[f64], kernel: &[f64], out: &mut [f64]) {
    let n = out.len();
    debug_assert_eq!(padded.len() + 1, n + kernel.len());
    out.fill(0.0);
    for (k, &w) in kernel.iter().enumerate() {
        let src = &padded[k..k + n];
        for (o, &x) in out.iter_mut().zip(src) {
            *o += w * x;
        }
    }
}

/// Cross-correlation with a symmetric kernel (`kernel[k] == kernel[K-1-k]`).
///
/// Products are formed only for the first half of the taps and reused for the
/// mirrored half. The accumulation order per output sample matches
/// [`correlate`], so the two agree bitwise.
pub fn correlate_symmetric(padded: &[f64], kernel: &[f64], out: &mut [f64], scratch: &mut Vec<f64>) {
    let taps = kernel.len();
    let half = taps.div_ceil(2);
    let width = padded.len();
    let n = out.len();
    debug_assert!(is_symmetric(kernel));
    scratch.clear();
    scratch.reserve(half * width);
    for &w in &kernel[..half] {
        scratch.extend(padded.iter().map(|&x| w * x));
    }
    out.fill(0.0);
    for k in 0..taps {
        let row = k.min(taps - 1 - k);
        let src = &scratch[row * width + k..row * width + k + n];
        for (o, &p) in out.iter_mut().zip(src) {
            *o += p;
        }
    }
}

pub fn is_symmetric(kernel: &[f64]) -> bool {
    kernel
        .iter()
        .zip(kernel.iter().rev())
        .all(|(a, b)| a.to_bits() == b.to_bits())
}

/// Dot product with four independent partial sums.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut tail = 0.0;
    for j in 4 * chunks..a.len() {
        tail += a[j] * b[j];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `grad_kernel[k] += sum_t upstream[t] * padded[t + k]`.
pub fn accumulate_kernel_grad(padded: &[f64], upstream: &[f64], grad_kernel: &mut [f64]) {
    let n = upstream.len();
    for (k, g) in grad_kernel.iter_mut().enumerate() {
        *g += dot(upstream, &padded[k..k + n]);
    }
}

/// `grad_padded[t + k] += kernel[k] * upstream[t]`.
pub fn accumulate_input_grad(kernel: &[f64], upstream: &[f64], grad_padded: &mut [f64]) {
    let n = upstream.len();
    for (k, &w) in kernel.iter().enumerate() {
        for (g, &u) in grad_padded[k..k + n].iter_mut().zip(upstream) {
            *g += w * u;
        }
    }
}
