use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::train::TrainError;
use crate::data::TrialSet;
use crate::network::Model;
use crate::tensor::Tensor;

const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunMetadata {
    pub config_hash: String,
    pub seed: u64,
    pub paradigm: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalReport {
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Subject id to `(correct, total)`.
    pub per_subject: BTreeMap<u8, (usize, usize)>,
    pub metadata: RunMetadata,
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

impl EvalReport {
    pub fn new(classes: usize, metadata: RunMetadata) -> Self {
        Self {
            confusion: vec![vec![0; classes]; classes],
            per_subject: BTreeMap::new(),
            metadata,
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize, subject: u8) {
        self.confusion[truth][predicted] += 1;
        let entry = self.per_subject.entry(subject).or_default();
        entry.0 += usize::from(truth == predicted);
        entry.1 += 1;
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.confusion.len()).map(|i| self.confusion[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    pub fn subject_accuracy(&self) -> BTreeMap<u8, f64> {
        self.per_subject
            .iter()
            .map(|(&s, &(c, n))| (s, c as f64 / n as f64))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let m = &self.metadata;
        writeln!(s, "accuracy {:.4}", self.accuracy()).unwrap();
        writeln!(s, "correct {} of {}", self.correct(), self.total()).unwrap();
        writeln!(s, "config_hash {}", m.config_hash).unwrap();
        writeln!(s, "seed {}", m.seed).unwrap();
        writeln!(s, "paradigm {}", m.paradigm).unwrap();
        writeln!(s, "confusion {} (rows true, columns predicted)", self.confusion.len()).unwrap();
        for row in &self.confusion {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        for (subject, (c, n)) in &self.per_subject {
            writeln!(s, "subject {subject} {c} {n} {:.4}", *c as f64 / *n as f64).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, String> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let mut field = |key: &str| -> Result<String, String> {
            let line = lines.next().ok_or_else(|| format!("missing `{key}` line"))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| format!("expected `{key} ...`, found {line:?}"))
        };
        field("accuracy")?;
        field("correct")?;
        let config_hash = field("config_hash")?;
        let seed = field("seed")?.parse().map_err(|_| "bad seed".to_string())?;
        let paradigm = field("paradigm")?;
        let classes: usize = field("confusion")?
            .split_whitespace()
            .next()
            .and_then(|n| n.parse().ok())
            .ok_or("bad confusion header")?;
        let mut report = EvalReport::new(
            classes,
            RunMetadata {
                config_hash,
                seed,
                paradigm,
            },
        );
        for row in report.confusion.iter_mut() {
            let line = lines.next().ok_or("confusion matrix is truncated")?;
            let cells: Vec<usize> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| format!("bad confusion row {line:?}"))?;
            if cells.len() != classes {
                return Err(format!("confusion row {line:?} needs {classes} cells"));
            }
            *row = cells;
        }
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["subject", s, c, n, _] => {
                    let parse = |v: &str| v.parse::<usize>().map_err(|_| format!("bad subject line {line:?}"));
                    let id = s.parse().map_err(|_| format!("bad subject line {line:?}"))?;
                    report.per_subject.insert(id, (parse(c)?, parse(n)?));
                }
                _ => return Err(format!("unexpected line {line:?}")),
            }
        }
        Ok(report)
    }
}

/// Scores precomputed logits `[B, N]` against `set`.
pub fn evaluate_logits(logits: &Tensor, set: &TrialSet, classes: usize, metadata: RunMetadata) -> EvalReport {
    let mut report = EvalReport::new(classes, metadata);
    for (row, trial) in logits.data().chunks(classes).zip(&set.trials) {
        report.record(trial.label as usize, argmax(row), trial.subject);
    }
    report
}

/// Inference-mode accuracy of `model` on `set`.
pub fn evaluate(model: &Model, set: &TrialSet, metadata: RunMetadata) -> Result<EvalReport, TrainError> {
    let mc = model.config();
    if set.is_empty() {
        return Err(TrainError::Empty);
    }
    if set.channels != mc.channels || set.samples != mc.samples {
        return Err(TrainError::Shape {
            data_c: set.channels,
            data_t: set.samples,
            model_c: mc.channels,
            model_t: mc.samples,
        });
    }
    if set.classes > mc.classes {
        return Err(TrainError::Classes {
            data: set.classes,
            model: mc.classes,
        });
    }
    // dropout is off, so the generator is never drawn from
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut report = EvalReport::new(mc.classes, metadata);
    let indices: Vec<usize> = (0..set.len()).collect();
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, labels) = set.batch(chunk);
        let logits = model.forward(&x, false, &mut rng)?;
        for ((row, &label), &i) in logits.data().chunks(mc.classes).zip(&labels).zip(chunk) {
            report.record(label, argmax(row), set.trials[i].subject);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Trial;

    fn balanced(classes: usize, per_class: usize) -> TrialSet {
        let mut set = TrialSet::new(128.0, 1, 1, classes).unwrap();
        for i in 0..classes * per_class {
            set.push(Trial {
                data: vec![0.0],
                label: (i % classes) as u8,
                subject: (i % 3 + 1) as u8,
                session: 2,
            })
            .unwrap();
        }
        set
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[-1.0, -0.5]), 1);
    }

    #[test]
    fn constant_class_zero_scores_chance() {
        let set = balanced(4, 10);
        let logits = Tensor::zeros(&[40, 4]);
        let r = evaluate_logits(&logits, &set, 4, RunMetadata::default());
        assert_eq!(r.accuracy(), 0.25);
        assert_eq!(r.total(), 40);
        assert!(r.confusion.iter().all(|row| row[0] == 10 && row[1..].iter().all(|&c| c == 0)));
    }

    #[test]
    fn oracle_logits_are_perfect() {
        let set = balanced(4, 6);
        let logits = Tensor::from_fn(&[24, 4], |i| if i % 4 == set.trials[i / 4].label as usize { 1.0 } else { 0.0 });
        let r = evaluate_logits(&logits, &set, 4, RunMetadata::default());
        assert_eq!(r.accuracy(), 1.0);
        for (i, row) in r.confusion.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                assert_eq!(c, if i == j { 6 } else { 0 });
            }
        }
        assert!(r.subject_accuracy().values().all(|&a| a == 1.0));
    }

    #[test]
    fn report_text_round_trip() {
        let set = balanced(3, 5);
        let logits = Tensor::from_fn(&[15, 3], |i| ((i * 7) % 5) as f64);
        let r = evaluate_logits(
            &logits,
            &set,
            3,
            RunMetadata {
                config_hash: "ab12".into(),
                seed: 7,
                paradigm: "competition".into(),
            },
        );
        let text = r.to_text();
        assert!(text.starts_with(&format!("accuracy {:.4}\n", r.accuracy())));
        assert_eq!(EvalReport::from_text(&text).unwrap(), r);
        assert!(EvalReport::from_text("accuracy 1\n").is_err());
    }
}
