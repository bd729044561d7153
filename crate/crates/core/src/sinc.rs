//! Learnable sinc bandpass filter bank.
//!
//! Each filter is the difference of two ideal low-pass filters with cutoffs
//! `f1 < f2` (normalized frequency, cycles/sample), truncated to `L` taps and
//! tapered with a Hamming window. Only the two cutoffs per filter are trained.
//!
//! Raw cutoffs are unconstrained; the effective cutoffs are
//!
//! ```text
//! f1_abs = |f1|
//! f2_abs = f1 + |f2 - f1|
//! ```
//!
//! both clamped to `[0, 0.5]`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

pub const NYQUIST: f64 = 0.5;

/// Bounds applied to freshly initialized cutoffs (normalized units).
pub const INIT_CLAMP: (f64, f64) = (0.01, 0.49);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SincError {
    #[error("cutoffs must satisfy 0 <= f1 <= f2 <= 0.5, got f1={f1}, f2={f2}")]
    CutoffOrder { f1: f64, f2: f64 },
    #[error("kernel length must be at least 2, got {0}")]
    KernelLength(usize),
    #[error("response needs at least {kernel_len} points (kernel length), got {n_points}")]
    TooFewPoints { n_points: usize, kernel_len: usize },
    #[error("filter bank needs at least one filter")]
    Empty,
}

/// Effective cutoffs together with the reparameterization subgradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoffs {
    pub f1_abs: f64,
    pub f2_abs: f64,
    /// d f1_abs / d f1_raw
    pub d1_d1: f64,
    /// d f2_abs / d f1_raw
    pub d2_d1: f64,
    /// d f2_abs / d f2_raw
    pub d2_d2: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamp to `[0, 0.5]`; the slope is zero strictly outside the interval.
fn clamp_band(x: f64) -> (f64, f64) {
    if x < 0.0 {
        (0.0, 0.0)
    } else if x > NYQUIST {
        (NYQUIST, 0.0)
    } else {
        (x, 1.0)
    }
}

impl Cutoffs {
    pub fn from_raw(f1_raw: f64, f2_raw: f64) -> Self {
        let (f1_abs, c1) = clamp_band(f1_raw.abs());
        let gap = f2_raw - f1_raw;
        let (f2_abs, c2) = clamp_band(f1_raw + gap.abs());
        Cutoffs {
            f1_abs,
            f2_abs,
            d1_d1: c1 * sign(f1_raw),
            d2_d1: c2 * (1.0 - sign(gap)),
            d2_d2: c2 * sign(gap),
        }
    }
}

pub fn reparameterize_cutoffs(f1_raw: f64, f2_raw: f64) -> (f64, f64) {
    let c = Cutoffs::from_raw(f1_raw, f2_raw);
    (c.f1_abs, c.f2_abs)
}

/// Hamming window `w[t] = 0.54 - 0.46 cos(2 pi t / L)` for `t = 0..L`.
pub fn hamming_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|t| 0.54 - 0.46 * (2.0 * PI * t as f64 / len as f64).cos())
        .collect()
}

/// Time offset of tap `n` from the kernel centre: `n - (L - 1) / 2`.
#[inline]
pub fn tap_offset(n: usize, len: usize) -> f64 {
    n as f64 - (len as f64 - 1.0) / 2.0
}

/// The Hamming taper sampled at the kernel taps.
///
/// Tap `n` sits at `t = tau(n) + L/2` on the window's time axis, which gives
/// `0.54 + 0.46 cos(2 pi tau / L)`. Being a function of `tau` through an even
/// cosine, the taper is exactly symmetric about the kernel centre.
#[inline]
pub fn tap_window(tau: f64, len: usize) -> f64 {
    0.54 + 0.46 * (2.0 * PI * tau / len as f64).cos()
}

/// `2 f sinc(2 pi f tau)` written without the division by `f`.
#[inline]
fn lowpass_tap(f: f64, tau: f64) -> f64 {
    if tau == 0.0 {
        2.0 * f
    } else {
        (2.0 * PI * f * tau).sin() / (PI * tau)
    }
}

/// Kernel for already-validated cutoffs. The first half is evaluated and
/// mirrored, so symmetry holds bit for bit.
pub(crate) fn kernel_unchecked(f1_abs: f64, f2_abs: f64, len: usize) -> Vec<f64> {
    let mut kernel = vec![0.0; len];
    for n in 0..len.div_ceil(2) {
        let tau = tap_offset(n, len);
        let v = (lowpass_tap(f2_abs, tau) - lowpass_tap(f1_abs, tau)) * tap_window(tau, len);
        kernel[n] = v;
        kernel[len - 1 - n] = v;
    }
    kernel
}

/// Time-domain windowed bandpass kernel of length `len`.
pub fn materialize_kernel(f1_abs: f64, f2_abs: f64, len: usize) -> Result<Vec<f64>, SincError> {
    if len < 2 {
        return Err(SincError::KernelLength(len));
    }
    if !(0.0 <= f1_abs && f1_abs <= f2_abs && f2_abs <= NYQUIST) {
        return Err(SincError::CutoffOrder {
            f1: f1_abs,
            f2: f2_abs,
        });
    }
    Ok(kernel_unchecked(f1_abs, f2_abs, len))
}

/// Gradients of the loss w.r.t. the raw cutoffs given `upstream = dloss/dkernel`.
///
/// `d/df [2 f sinc(2 pi f tau)] = 2 cos(2 pi f tau)`, which is 2 at `tau = 0`.
pub fn kernel_gradients(upstream: &[f64], f1_raw: f64, f2_raw: f64) -> (f64, f64) {
    let len = upstream.len();
    let c = Cutoffs::from_raw(f1_raw, f2_raw);
    let mut d_f1_abs = 0.0;
    let mut d_f2_abs = 0.0;
    for (n, &u) in upstream.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        let tau = tap_offset(n, len);
        let w = tap_window(tau, len);
        d_f2_abs += u * 2.0 * (2.0 * PI * c.f2_abs * tau).cos() * w;
        d_f1_abs -= u * 2.0 * (2.0 * PI * c.f1_abs * tau).cos() * w;
    }
    (
        d_f1_abs * c.d1_d1 + d_f2_abs * c.d2_d1,
        d_f2_abs * c.d2_d2,
    )
}

/// Gaussian sampler for initial cutoffs, in Hz.
#[derive(Debug, Clone, Copy)]
pub struct CutoffPrior {
    pub mean_hz: f64,
    pub std_hz: f64,
}

impl CutoffPrior {
    /// Mean `fs/4` and variance `fs/4`.
    pub fn for_sampling_rate(fs: f64) -> Self {
        Self {
            mean_hz: fs / 4.0,
            std_hz: (fs / 4.0).sqrt(),
        }
    }

    pub fn sample_hz(&self, rng: &mut impl rand::Rng) -> f64 {
        Normal::new(self.mean_hz, self.std_hz)
            .expect("cutoff prior std must be finite and non-negative")
            .sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SincFilterBank {
    /// Raw low cutoffs, cycles/sample.
    pub f1: Vec<f64>,
    /// Raw high cutoffs, cycles/sample.
    pub f2: Vec<f64>,
    pub kernel_len: usize,
    pub sampling_rate: f64,
}

impl SincFilterBank {
    /// Draws `n_filters` cutoff pairs from `prior`, clamps them to
    /// [`INIT_CLAMP`] and orders each pair with a bandwidth of at least `1/L`.
    pub fn init(
        n_filters: usize,
        kernel_len: usize,
        sampling_rate: f64,
        prior: CutoffPrior,
        seed: u64,
    ) -> Result<Self, SincError> {
        if n_filters == 0 {
            return Err(SincError::Empty);
        }
        if kernel_len < 2 {
            return Err(SincError::KernelLength(kernel_len));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lo_clamp, hi_clamp) = INIT_CLAMP;
        let min_width = 1.0 / kernel_len as f64;
        let mut f1 = Vec::with_capacity(n_filters);
        let mut f2 = Vec::with_capacity(n_filters);
        for _ in 0..n_filters {
            let a = (prior.sample_hz(&mut rng) / sampling_rate).clamp(lo_clamp, hi_clamp);
            let b = (prior.sample_hz(&mut rng) / sampling_rate).clamp(lo_clamp, hi_clamp);
            let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
            if hi - lo < min_width {
                hi = lo + min_width;
                if hi > hi_clamp {
                    hi = hi_clamp;
                    lo = hi - min_width;
                }
            }
            f1.push(lo);
            f2.push(hi);
        }
        Ok(Self {
            f1,
            f2,
            kernel_len,
            sampling_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.f1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f1.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.len()
    }

    pub fn effective_cutoffs(&self) -> Vec<(f64, f64)> {
        self.f1
            .iter()
            .zip(&self.f2)
            .map(|(&a, &b)| reparameterize_cutoffs(a, b))
            .collect()
    }

    pub fn cutoffs_hz(&self) -> Vec<(f64, f64)> {
        self.effective_cutoffs()
            .into_iter()
            .map(|(a, b)| (a * self.sampling_rate, b * self.sampling_rate))
            .collect()
    }

    pub fn kernels(&self) -> Vec<Vec<f64>> {
        self.effective_cutoffs()
            .into_iter()
            .map(|(a, b)| kernel_unchecked(a, b, self.kernel_len))
            .collect()
    }

    /// Interleaved `[f1_0, f2_0, f1_1, f2_1, ...]`, the layout of the model's cutoff tensor.
    pub fn to_interleaved(&self) -> Vec<f64> {
        self.f1.iter().zip(&self.f2).flat_map(|(&a, &b)| [a, b]).collect()
    }

    pub fn from_interleaved(values: &[f64], kernel_len: usize, sampling_rate: f64) -> Self {
        Self {
            f1: values.iter().step_by(2).copied().collect(),
            f2: values.iter().skip(1).step_by(2).copied().collect(),
            kernel_len,
            sampling_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    /// Normalized frequencies, `0..=0.5`.
    pub frequencies: Vec<f64>,
    pub magnitude: Vec<f64>,
}

/// Magnitude of the zero-padded DFT at `n_points` evenly spaced frequencies
/// from 0 to Nyquist inclusive.
pub fn frequency_response(kernel: &[f64], n_points: usize) -> Result<FrequencyResponse, SincError> {
    if n_points < kernel.len().max(2) {
        return Err(SincError::TooFewPoints {
            n_points,
            kernel_len: kernel.len(),
        });
    }
    let size = 2 * (n_points - 1);
    let mut buf: Vec<Complex<f64>> = kernel
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    FftPlanner::new().plan_fft_forward(size).process(&mut buf);
    Ok(FrequencyResponse {
        frequencies: (0..n_points).map(|k| k as f64 / size as f64).collect(),
        magnitude: buf[..n_points].iter().map(|c| c.norm()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reparameterization_examples() {
        let (a, b) = reparameterize_cutoffs(-10.0 / 128.0, 20.0 / 128.0);
        assert!((a - 10.0 / 128.0).abs() < 1e-15);
        assert!((b - 20.0 / 128.0).abs() < 1e-15);

        let (a, b) = reparameterize_cutoffs(20.0 / 128.0, 5.0 / 128.0);
        assert!((a - 20.0 / 128.0).abs() < 1e-15);
        assert!((b - 35.0 / 128.0).abs() < 1e-15);

        assert_eq!(reparameterize_cutoffs(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn hamming_examples() {
        let w = hamming_window(64);
        assert!((w[0] - 0.08).abs() < 1e-15);
        assert!((w[32] - 1.0).abs() < 1e-15);
        for t in 1..64 {
            assert!((w[t] - w[64 - t]).abs() < 1e-15, "t={t}");
        }
    }

    #[test]
    fn degenerate_band_is_zero() {
        let k = materialize_kernel(0.2, 0.2, 64).unwrap();
        assert!(k.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn full_band_centre_tap() {
        let k = materialize_kernel(0.0, 0.5, 33).unwrap();
        let centre = 16;
        assert!((k[centre] - 1.0 * tap_window(0.0, 33)).abs() < 1e-15);
        assert!((k[centre] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_order_cutoffs_rejected() {
        assert!(matches!(
            materialize_kernel(0.3, 0.2, 64),
            Err(SincError::CutoffOrder { .. })
        ));
        assert!(materialize_kernel(0.1, 0.6, 64).is_err());
        assert!(matches!(materialize_kernel(0.1, 0.2, 1), Err(SincError::KernelLength(1))));
    }

    #[test]
    fn kernels_are_exactly_symmetric() {
        for &len in &[2usize, 7, 33, 64] {
            let k = materialize_kernel(0.07, 0.31, len).unwrap();
            for n in 0..len {
                assert_eq!(k[n].to_bits(), k[len - 1 - n].to_bits());
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        assert_eq!(kernel_gradients(&[0.0; 33], 0.05, 0.2), (0.0, 0.0));
    }

    #[test]
    fn clamped_cutoff_has_no_gradient() {
        let upstream: Vec<f64> = (0..33).map(|i| ((i * 7) % 5) as f64 - 2.0).collect();
        // f2_abs = 0.1 + |0.7 - 0.1| = 0.7 -> clamped to 0.5
        let (d1, d2) = kernel_gradients(&upstream, 0.1, 0.7);
        assert_eq!(d2, 0.0);
        // f1 still moves f1_abs; its path through f2_abs is cut by the clamp
        assert!(d1 != 0.0);
        let c = Cutoffs::from_raw(0.1, 0.7);
        assert_eq!(c.f2_abs, 0.5);
        assert_eq!(c.d2_d1, 0.0);
    }

    #[test]
    fn init_is_deterministic_and_ordered() {
        let prior = CutoffPrior::for_sampling_rate(128.0);
        let a = SincFilterBank::init(32, 64, 128.0, prior, 7).unwrap();
        let b = SincFilterBank::init(32, 64, 128.0, prior, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.parameter_count(), 64);
        for (lo, hi) in a.effective_cutoffs() {
            assert!(lo >= 0.01 && hi <= 0.49);
            assert!(hi - lo >= 1.0 / 64.0 - 1e-15);
        }
        let c = SincFilterBank::init(32, 64, 128.0, prior, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prior_mean_is_quarter_sampling_rate() {
        let p = CutoffPrior::for_sampling_rate(128.0);
        assert_eq!(p.mean_hz / 128.0, 0.25);
        assert!((p.std_hz - 32f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn interleaved_round_trip() {
        let bank = SincFilterBank::init(5, 16, 128.0, CutoffPrior::for_sampling_rate(128.0), 1).unwrap();
        let back = SincFilterBank::from_interleaved(&bank.to_interleaved(), 16, 128.0);
        assert_eq!(bank, back);
    }

    #[test]
    fn response_of_trivial_kernels() {
        let r = frequency_response(&[0.0; 8], 16).unwrap();
        assert!(r.magnitude.iter().all(|&m| m == 0.0));
        assert_eq!(r.frequencies.len(), 16);
        assert_eq!(r.frequencies[15], 0.5);

        let mut delta = vec![0.0; 8];
        delta[3] = 1.0;
        let r = frequency_response(&delta, 16).unwrap();
        assert!(r.magnitude.iter().all(|&m| (m - 1.0).abs() < 1e-12));

        assert!(frequency_response(&delta, 7).is_err());
    }
}
