//! EEG trial sets, the `EEGT` container, preprocessing and synthetic data.

pub mod container;
pub mod preprocess;
pub mod synthetic;

use thiserror::Error;

use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialSetError {
    #[error("trial has {actual} samples, expected C*T = {expected}")]
    TrialLength { expected: usize, actual: usize },
    #[error("label {label} out of range for {classes} classes")]
    Label { label: u8, classes: usize },
    #[error("trial set needs C >= 1, T >= 1 and at least 2 classes")]
    Dimensions,
}

/// One EEG trial; `data` is `C x T`, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub data: Vec<f64>,
    pub label: u8,
    pub subject: u8,
    /// 1 or 2; 0 means untagged.
    pub session: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub fs: f64,
    pub channels: usize,
    pub samples: usize,
    pub classes: usize,
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn new(fs: f64, channels: usize, samples: usize, classes: usize) -> Result<Self, TrialSetError> {
        if channels == 0 || samples == 0 || classes < 2 {
            return Err(TrialSetError::Dimensions);
        }
        Ok(Self {
            fs,
            channels,
            samples,
            classes,
            trials: Vec::new(),
        })
    }

    /// An empty set with the same geometry.
    pub fn empty_like(&self) -> Self {
        Self {
            trials: Vec::new(),
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Self {
        Self {
            fs: self.fs,
            channels: self.channels,
            samples: self.samples,
            classes: self.classes,
            trials: Vec::new(),
        }
    }

    pub fn push(&mut self, trial: Trial) -> Result<(), TrialSetError> {
        self.check(&trial)?;
        self.trials.push(trial);
        Ok(())
    }

    fn check(&self, trial: &Trial) -> Result<(), TrialSetError> {
        let expected = self.channels * self.samples;
        if trial.data.len() != expected {
            return Err(TrialSetError::TrialLength {
                expected,
                actual: trial.data.len(),
            });
        }
        if trial.label as usize >= self.classes {
            return Err(TrialSetError::Label {
                label: trial.label,
                classes: self.classes,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), TrialSetError> {
        if self.channels == 0 || self.samples == 0 || self.classes < 2 {
            return Err(TrialSetError::Dimensions);
        }
        self.trials.iter().try_for_each(|t| self.check(t))
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<u8> {
        let mut s: Vec<u8> = self.trials.iter().map(|t| t.subject).collect();
        s.sort_unstable();
        s.dedup();
        s
    }

    pub fn filter(&self, mut keep: impl FnMut(&Trial) -> bool) -> Self {
        Self {
            trials: self.trials.iter().filter(|t| keep(t)).cloned().collect(),
            ..self.clone_header()
        }
    }

    /// Stacks the selected trials into a `[B, C, T]` tensor plus labels.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let per = self.channels * self.samples;
        let mut data = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.trials[i].data);
            labels.push(self.trials[i].label as usize);
        }
        let tensor = Tensor::new(vec![indices.len(), self.channels, self.samples], data)
            .expect("trial lengths are validated on insertion");
        (tensor, labels)
    }

    /// Trials per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for t in &self.trials {
            counts[t.label as usize] += 1;
        }
        counts
    }
}
