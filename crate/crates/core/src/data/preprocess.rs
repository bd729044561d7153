//! Preprocessing chain: 64 Hz low-pass, resampling to 128 Hz, per-trial z-score.

use std::f64::consts::PI;
use std::fmt;

use thiserror::Error;

use super::TrialSet;

pub const TARGET_RATE: f64 = 128.0;
pub const LOWPASS_CUTOFF_HZ: f64 = 64.0;
pub const LOWPASS_TAPS: usize = 129;
/// Lowpass zero crossings on each side of the resampling kernel.
const RESAMPLE_ZERO_CROSSINGS: f64 = 32.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PreprocessError {
    #[error("signal of {len} samples is shorter than the {taps}-tap filter")]
    TooShort { len: usize, taps: usize },
    #[error("input rate {fs} Hz must exceed {TARGET_RATE} Hz for low-pass filtering")]
    RateTooLow { fs: f64 },
    #[error("sampling rates must be positive integers, got {fs_in} -> {fs_out}")]
    NonIntegerRate { fs_in: f64, fs_out: f64 },
}

/// Per-channel or whole-trial standardization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZScoreMode {
    #[default]
    PerChannel,
    WholeTrial,
}

/// A constant channel (or trial) that could not be standardized and was zeroed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegenerateChannel {
    pub trial: usize,
    /// `None` in whole-trial mode.
    pub channel: Option<usize>,
}

impl fmt::Display for DegenerateChannel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.channel {
            Some(c) => write!(f, "warning: trial {} channel {c} is constant; set to zero", self.trial),
            None => write!(f, "warning: trial {} is constant; set to zero", self.trial),
        }
    }
}

/// Hamming-windowed sinc low-pass, normalized to unit DC gain.
/// `cutoff` is in cycles/sample.
pub fn design_lowpass(num_taps: usize, cutoff: f64) -> Vec<f64> {
    let m = (num_taps - 1) as f64;
    let mut h: Vec<f64> = (0..num_taps)
        .map(|n| {
            let x = n as f64 - m / 2.0;
            let ideal = if x == 0.0 {
                2.0 * cutoff
            } else {
                (2.0 * PI * cutoff * x).sin() / (PI * x)
            };
            let w = if num_taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * n as f64 / m).cos()
            };
            ideal * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Applies an odd-length linear-phase FIR without delay: the signal is
/// extended by odd reflection at both ends, filtered, and trimmed by the
/// group delay.
pub fn filter_zero_phase(signal: &[f64], taps: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    let half = taps.len() / 2;
    if signal.len() < taps.len() {
        return Err(PreprocessError::TooShort {
            len: signal.len(),
            taps: taps.len(),
        });
    }
    let n = signal.len();
    let first = signal[0];
    let last = signal[n - 1];
    let mut ext = Vec::with_capacity(n + 2 * half);
    ext.extend((1..=half).rev().map(|k| 2.0 * first - signal[k]));
    ext.extend_from_slice(signal);
    ext.extend((1..=half).map(|k| 2.0 * last - signal[n - 1 - k]));
    let mut out = vec![0.0; n];
    crate::ops::conv::correlate(&ext, taps, &mut out);
    Ok(out)
}

/// 129-tap Hamming low-pass at 64 Hz applied without phase shift.
pub fn lowpass_64hz(signal: &[f64], fs_in: f64) -> Result<Vec<f64>, PreprocessError> {
    if fs_in <= TARGET_RATE {
        return Err(PreprocessError::RateTooLow { fs: fs_in });
    }
    let taps = design_lowpass(LOWPASS_TAPS, LOWPASS_CUTOFF_HZ / fs_in);
    filter_zero_phase(signal, &taps)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Rational-ratio resampler using a polyphase windowed-sinc interpolator.
#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// Taps per phase, starting at input offset `1 - half_width`.
    phases: Vec<Vec<f64>>,
    half_width: usize,
}

impl Resampler {
    pub fn new(fs_in: f64, fs_out: f64) -> Result<Self, PreprocessError> {
        let is_int = |f: f64| f > 0.0 && f.fract() == 0.0 && f < u32::MAX as f64;
        if !is_int(fs_in) || !is_int(fs_out) {
            return Err(PreprocessError::NonIntegerRate { fs_in, fs_out });
        }
        let (a, b) = (fs_in as u64, fs_out as u64);
        let g = gcd(a, b);
        let up = (b / g) as usize;
        let down = (a / g) as usize;
        let ratio = (up as f64 / down as f64).min(1.0);
        // cutoff at the lower of the two Nyquist rates, in input cycles/sample
        let cutoff = 0.5 * ratio;
        let reach = RESAMPLE_ZERO_CROSSINGS / (2.0 * cutoff);
        let half_width = reach.ceil() as usize;
        let phases = (0..up)
            .map(|p| {
                let frac = p as f64 / up as f64;
                let mut taps: Vec<f64> = (0..2 * half_width)
                    .map(|j| {
                        // input index = base + 1 - half_width + j
                        let u = frac - (j as f64 + 1.0 - half_width as f64);
                        if u.abs() >= reach {
                            return 0.0;
                        }
                        let ideal = if u == 0.0 {
                            2.0 * cutoff
                        } else {
                            (2.0 * PI * cutoff * u).sin() / (PI * u)
                        };
                        ideal * (0.54 + 0.46 * (PI * u / reach).cos())
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|v| *v /= sum);
                taps
            })
            .collect();
        Ok(Self {
            up,
            down,
            phases,
            half_width,
        })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        input_len * self.up / self.down
    }

    pub fn process(&self, signal: &[f64]) -> Vec<f64> {
        if signal.is_empty() {
            return Vec::new();
        }
        let last = signal.len() as isize - 1;
        (0..self.output_len(signal.len()))
            .map(|m| {
                let num = m * self.down;
                let base = (num / self.up) as isize;
                let taps = &self.phases[num % self.up];
                let start = base + 1 - self.half_width as isize;
                taps.iter()
                    .enumerate()
                    .map(|(j, &w)| w * signal[(start + j as isize).clamp(0, last) as usize])
                    .sum()
            })
            .collect()
    }
}

pub fn resample(signal: &[f64], fs_in: f64, fs_out: f64) -> Result<Vec<f64>, PreprocessError> {
    Ok(Resampler::new(fs_in, fs_out)?.process(signal))
}

pub fn resample_to_128(signal: &[f64], fs_in: f64) -> Result<Vec<f64>, PreprocessError> {
    resample(signal, fs_in, TARGET_RATE)
}

/// Standardizes a `C x T` trial in place (population std). Returns the
/// channels that were constant and have been zeroed.
pub fn zscore_trial(data: &mut [f64], samples: usize, mode: ZScoreMode) -> Vec<usize> {
    fn standardize(xs: &mut [f64]) -> bool {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            xs.fill(0.0);
            return false;
        }
        xs.iter_mut().for_each(|v| *v = (*v - mean) / std);
        true
    }
    match mode {
        ZScoreMode::PerChannel => data
            .chunks_mut(samples)
            .enumerate()
            .filter_map(|(c, row)| (!standardize(row)).then_some(c))
            .collect(),
        ZScoreMode::WholeTrial => {
            if standardize(data) {
                Vec::new()
            } else {
                (0..data.len() / samples).collect()
            }
        }
    }
}

/// Low-pass, resample to 128 Hz (when the input is faster) and z-score every trial.
pub fn preprocess(set: &TrialSet, mode: ZScoreMode) -> Result<(TrialSet, Vec<DegenerateChannel>), PreprocessError> {
    let mut out = set.empty_like();
    if set.fs != TARGET_RATE {
        if set.fs < TARGET_RATE {
            return Err(PreprocessError::RateTooLow { fs: set.fs });
        }
        let resampler = Resampler::new(set.fs, TARGET_RATE)?;
        out.fs = TARGET_RATE;
        out.samples = resampler.output_len(set.samples);
        for t in &set.trials {
            let mut data = Vec::with_capacity(set.channels * out.samples);
            for row in t.data.chunks(set.samples) {
                data.extend(resampler.process(&lowpass_64hz(row, set.fs)?));
            }
            out.trials.push(super::Trial { data, ..t.clone() });
        }
    } else {
        out.trials = set.trials.clone();
    }
    let mut warnings = Vec::new();
    for (i, t) in out.trials.iter_mut().enumerate() {
        for c in zscore_trial(&mut t.data, out.samples, mode) {
            warnings.push(DegenerateChannel {
                trial: i,
                channel: (mode == ZScoreMode::PerChannel).then_some(c),
            });
            if mode == ZScoreMode::WholeTrial {
                break;
            }
        }
    }
    Ok((out, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zscore_closed_form() {
        let mut x = vec![1.0, 2.0, 3.0];
        assert!(zscore_trial(&mut x, 3, ZScoreMode::PerChannel).is_empty());
        let e = (1.5f64).sqrt();
        for (a, b) in x.iter().zip([-e, 0.0, e]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((x[0] + 1.2247).abs() < 1e-4);
    }

    #[test]
    fn zscore_is_idempotent() {
        let mut x: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        zscore_trial(&mut x, 50, ZScoreMode::PerChannel);
        let before = x.clone();
        zscore_trial(&mut x, 50, ZScoreMode::PerChannel);
        for (a, b) in x.iter().zip(&before) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_channel_zeroed_with_warning() {
        let mut x = vec![4.0, 4.0, 4.0, 1.0, 2.0, 3.0];
        let bad = zscore_trial(&mut x, 3, ZScoreMode::PerChannel);
        assert_eq!(bad, vec![0]);
        assert_eq!(&x[..3], &[0.0, 0.0, 0.0]);
        let w = DegenerateChannel {
            trial: 2,
            channel: Some(0),
        };
        assert!(w.to_string().starts_with("warning:"));
    }

    #[test]
    fn whole_trial_mode_uses_joint_statistics() {
        let mut x = vec![0.0, 0.0, 2.0, 2.0];
        assert!(zscore_trial(&mut x, 2, ZScoreMode::WholeTrial).is_empty());
        assert_eq!(x, vec![-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn lowpass_design_is_symmetric_with_unit_dc() {
        let h = design_lowpass(129, 64.0 / 250.0);
        assert_eq!(h.len(), 129);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for n in 0..129 {
            assert!((h[n] - h[128 - n]).abs() < 1e-15);
        }
    }

    #[test]
    fn short_signal_and_slow_rate_rejected() {
        assert!(matches!(
            lowpass_64hz(&[0.0; 100], 250.0),
            Err(PreprocessError::TooShort { len: 100, taps: 129 })
        ));
        assert!(matches!(
            lowpass_64hz(&[0.0; 500], 128.0),
            Err(PreprocessError::RateTooLow { .. })
        ));
        assert!(Resampler::new(250.5, 128.0).is_err());
    }

    #[test]
    fn resample_lengths() {
        assert_eq!(resample_to_128(&vec![0.0; 1000], 250.0).unwrap().len(), 512);
        assert_eq!(resample_to_128(&vec![0.0; 999], 250.0).unwrap().len(), 511);
    }

    #[test]
    fn constant_survives_resampling() {
        let y = resample_to_128(&vec![3.5; 1000], 250.0).unwrap();
        assert!(y.iter().all(|v| (v - 3.5).abs() < 1e-12));
    }

    #[test]
    fn preprocess_passes_128hz_through_to_zscore() {
        let mut set = TrialSet::new(128.0, 2, 64, 2).unwrap();
        set.push(super::super::Trial {
            data: (0..128).map(|i| (i as f64 * 0.3).sin() * 5.0 + 2.0).collect(),
            label: 0,
            subject: 1,
            session: 1,
        })
        .unwrap();
        let (out, warnings) = preprocess(&set, ZScoreMode::PerChannel).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(out.samples, 64);
        for row in out.trials[0].data.chunks(64) {
            let mean = row.iter().sum::<f64>() / 64.0;
            assert!(mean.abs() < 1e-9);
        }
    }
}
