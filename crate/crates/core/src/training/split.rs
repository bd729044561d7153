use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::data::TrialSet;

pub const TRAIN_SESSION: u8 = 1;
pub const TEST_SESSION: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Paradigm {
    Competition,
    WithinSubject,
    CrossSubject,
}

impl Paradigm {
    pub const ALL: [Paradigm; 3] = [Paradigm::Competition, Paradigm::WithinSubject, Paradigm::CrossSubject];

    pub fn as_str(self) -> &'static str {
        match self {
            Paradigm::Competition => "competition",
            Paradigm::WithinSubject => "within_subject",
            Paradigm::CrossSubject => "cross_subject",
        }
    }

    pub fn needs_subject(self) -> bool {
        self != Paradigm::Competition
    }

    /// 0.5 within subject, 0.25 otherwise.
    pub fn default_dropout(self) -> f64 {
        match self {
            Paradigm::WithinSubject => 0.5,
            _ => 0.25,
        }
    }
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Paradigm {
    type Err = SplitError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Paradigm::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| SplitError::UnknownParadigm(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("unknown paradigm {0:?} (expected competition, within_subject or cross_subject)")]
    UnknownParadigm(String),
    #[error("paradigm {0} requires a subject id")]
    MissingSubject(Paradigm),
    #[error("subject {subject} not present (available: {available:?})")]
    UnknownSubject { subject: u8, available: Vec<u8> },
    #[error("trial {index} has session tag {session}; expected 1 (train) or 2 (test)")]
    SessionTag { index: usize, session: u8 },
    #[error("{which} split is empty")]
    Empty { which: &'static str },
}

/// Splits by session: session 1 trains, session 2 tests.
pub fn split_dataset(
    trials: &TrialSet,
    paradigm: Paradigm,
    subject: Option<u8>,
) -> Result<(TrialSet, TrialSet), SplitError> {
    if let Some((index, t)) = trials
        .trials
        .iter()
        .enumerate()
        .find(|(_, t)| t.session != TRAIN_SESSION && t.session != TEST_SESSION)
    {
        return Err(SplitError::SessionTag {
            index,
            session: t.session,
        });
    }
    let subject = match (paradigm.needs_subject(), subject) {
        (true, None) => return Err(SplitError::MissingSubject(paradigm)),
        (true, Some(s)) => {
            let available = trials.subjects();
            if !available.contains(&s) {
                return Err(SplitError::UnknownSubject { subject: s, available });
            }
            Some(s)
        }
        (false, _) => None,
    };
    let (train, test) = match (paradigm, subject) {
        (Paradigm::Competition, _) => (
            trials.filter(|t| t.session == TRAIN_SESSION),
            trials.filter(|t| t.session == TEST_SESSION),
        ),
        (Paradigm::WithinSubject, Some(s)) => (
            trials.filter(|t| t.subject == s && t.session == TRAIN_SESSION),
            trials.filter(|t| t.subject == s && t.session == TEST_SESSION),
        ),
        (Paradigm::CrossSubject, Some(s)) => (
            trials.filter(|t| t.subject != s && t.session == TRAIN_SESSION),
            trials.filter(|t| t.subject == s && t.session == TEST_SESSION),
        ),
        _ => unreachable!("subject resolved above"),
    };
    if train.is_empty() {
        return Err(SplitError::Empty { which: "training" });
    }
    if test.is_empty() {
        return Err(SplitError::Empty { which: "test" });
    }
    Ok((train, test))
}
