//! Synthetic band-power trials for desk-scale validation.
//!
//! Every trial is unit-variance white Gaussian noise on all channels plus, on
//! a class-specific subset of channels, a band-limited Gaussian component
//! whose spectrum is confined to the class band. `snr` is the power ratio of
//! that component to the noise on the channels where it is injected.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{num_complex::Complex, FftPlanner};
use thiserror::Error;

use super::{Trial, TrialSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("band {lo}-{hi} Hz is invalid: need 0 <= lo < hi < fs/2 = {nyquist}")]
    BadBand { lo: f64, hi: f64, nyquist: f64 },
    #[error("bands {a:?} and {b:?} overlap")]
    Overlap { a: (f64, f64), b: (f64, f64) },
    #[error("band {lo}-{hi} Hz contains no DFT bin at T = {samples}, fs = {fs}")]
    EmptyBand { lo: f64, hi: f64, samples: usize, fs: f64 },
    #[error("need at least two class bands")]
    TooFewClasses,
    #[error("snr must be positive, got {0}")]
    Snr(f64),
    #[error("invalid geometry: {0}")]
    Geometry(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub channels: usize,
    pub samples: usize,
    pub fs: f64,
    /// One `(lo, hi)` band in Hz per class.
    pub bands: Vec<(f64, f64)>,
    /// Linear power ratio; `f64::INFINITY` drops the noise entirely.
    pub snr: f64,
    /// Trials are generated for sessions `1..=sessions`, `n_per_class` per class each.
    pub sessions: u8,
    pub subject: u8,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.bands.len() < 2 {
            return Err(SyntheticError::TooFewClasses);
        }
        if self.channels == 0 || self.samples < 2 || self.sessions == 0 || !(self.fs > 0.0) {
            return Err(SyntheticError::Geometry(format!(
                "C = {}, T = {}, fs = {}, sessions = {}",
                self.channels, self.samples, self.fs, self.sessions
            )));
        }
        if !(self.snr > 0.0) {
            return Err(SyntheticError::Snr(self.snr));
        }
        let nyquist = self.fs / 2.0;
        for &(lo, hi) in &self.bands {
            if !(lo >= 0.0 && lo < hi && hi < nyquist) {
                return Err(SyntheticError::BadBand { lo, hi, nyquist });
            }
            if band_bins(lo, hi, self.samples, self.fs).is_empty() {
                return Err(SyntheticError::EmptyBand {
                    lo,
                    hi,
                    samples: self.samples,
                    fs: self.fs,
                });
            }
        }
        for (i, &a) in self.bands.iter().enumerate() {
            for &b in &self.bands[i + 1..] {
                if a.0 <= b.1 && b.0 <= a.1 {
                    return Err(SyntheticError::Overlap { a, b });
                }
            }
        }
        Ok(())
    }

    /// Channels carrying the class-`class` component.
    pub fn class_channels(&self, class: usize) -> Vec<usize> {
        let n = self.bands.len();
        if self.channels < n {
            return (0..self.channels).collect();
        }
        (0..self.channels).filter(|c| c % n == class).collect()
    }
}

fn band_bins(lo: f64, hi: f64, samples: usize, fs: f64) -> Vec<usize> {
    (1..=samples / 2)
        .filter(|&k| {
            let f = k as f64 * fs / samples as f64;
            f >= lo && f <= hi && !(samples % 2 == 0 && k == samples / 2)
        })
        .collect()
}

/// Zero-mean, unit-variance Gaussian noise with spectrum confined to `bins`.
fn band_limited(bins: &[usize], samples: usize, fft: &dyn rustfft::Fft<f64>, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut spec = vec![Complex::new(0.0, 0.0); samples];
    for &k in bins {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        spec[k] = Complex::new(re, im);
        spec[samples - k] = Complex::new(re, -im);
    }
    fft.process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / samples as f64).sqrt();
    x.into_iter().map(|v| v / rms).collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<TrialSet, SyntheticError> {
    spec.validate()?;
    let classes = spec.bands.len();
    let mut set = TrialSet::new(spec.fs, spec.channels, spec.samples, classes)
        .map_err(|e| SyntheticError::Geometry(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ifft = FftPlanner::new().plan_fft_inverse(spec.samples);
    let bins: Vec<Vec<usize>> = spec
        .bands
        .iter()
        .map(|&(lo, hi)| band_bins(lo, hi, spec.samples, spec.fs))
        .collect();
    let noisy = spec.snr.is_finite();
    let gain = if noisy { spec.snr.sqrt() } else { 1.0 };
    for session in 1..=spec.sessions {
        for _ in 0..spec.n_per_class {
            for class in 0..classes {
                let mut data = vec![0.0; spec.channels * spec.samples];
                if noisy {
                    data.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
                }
                for c in spec.class_channels(class) {
                    let component = band_limited(&bins[class], spec.samples, ifft.as_ref(), &mut rng);
                    let row = &mut data[c * spec.samples..(c + 1) * spec.samples];
                    row.iter_mut().zip(component).for_each(|(v, s)| *v += gain * s);
                }
                set.trials.push(Trial {
                    data,
                    label: class as u8,
                    subject: spec.subject,
                    session,
                });
            }
        }
    }
    Ok(set)
}

/// Parses `"8-12,18-26"` into `[(8, 12), (18, 26)]`.
pub fn parse_bands(text: &str) -> Result<Vec<(f64, f64)>, String> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            let (lo, hi) = part
                .split_once('-')
                .ok_or_else(|| format!("band {part:?} is not of the form lo-hi"))?;
            let lo: f64 = lo.trim().parse().map_err(|_| format!("bad low edge in {part:?}"))?;
            let hi: f64 = hi.trim().parse().map_err(|_| format!("bad high edge in {part:?}"))?;
            if lo >= hi {
                return Err(format!("band {part:?} needs lo < hi"));
            }
            Ok((lo, hi))
        })
        .collect()
}
