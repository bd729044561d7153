//! Flat `key = value` run configuration.
//!
//! ```text
//! # comments start with '#'
//! channels = 22
//! samples = 512
//! paradigm = within_subject
//! subject = 3
//! ```
//!
//! Unknown or repeated keys are rejected. Omitted keys take the defaults of
//! [`ModelConfig`] and [`TrainConfig`]; `dropout` defaults per paradigm and
//! `pointwise_filters` defaults to `depth_multiplier * sinc_filters`.

use std::fmt::Write as _;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::data::preprocess::{ZScoreMode, TARGET_RATE};
use crate::network::{ModelConfig, ModelError};
use crate::training::{Paradigm, TrainConfig, TrainError};

pub const KEYS: &[&str] = &[
    "channels",
    "samples",
    "sinc_length",
    "sinc_filters",
    "depth_multiplier",
    "pointwise_filters",
    "classes",
    "dropout",
    "celu_alpha",
    "init_std_hz",
    "learning_rate",
    "beta1",
    "beta2",
    "adam_eps",
    "weight_decay",
    "decoupled_weight_decay",
    "decay_all_parameters",
    "batch_size",
    "epochs",
    "seed",
    "paradigm",
    "subject",
    "zscore",
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: unknown key {key:?}")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key {key:?} given twice")]
    Duplicate { line: usize, key: String },
    #[error("line {line}: {key} = {value:?}: {msg}")]
    Value {
        line: usize,
        key: String,
        value: String,
        msg: String,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paradigm: Paradigm,
    pub subject: Option<u8>,
    pub zscore: ZScoreMode,
    /// Dropout given explicitly, overriding the paradigm default.
    pub dropout_override: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            paradigm: Paradigm::Competition,
            subject: None,
            zscore: ZScoreMode::PerChannel,
            dropout_override: None,
        };
        cfg.set_paradigm(Paradigm::Competition);
        cfg
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err("expected true or false".into()),
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| "not a valid number".to_string())
}

fn zscore_name(mode: ZScoreMode) -> &'static str {
    match mode {
        ZScoreMode::PerChannel => "per_channel",
        ZScoreMode::WholeTrial => "whole_trial",
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        let mut pointwise = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap().trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line,
                text: raw.to_string(),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let known = *KEYS.iter().find(|k| **k == key).ok_or_else(|| ConfigError::UnknownKey {
                line,
                key: key.to_string(),
            })?;
            if seen.contains(&known) {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
            seen.push(known);
            let m = &mut cfg.model;
            let t = &mut cfg.train;
            let result: Result<(), String> = (|| {
                match known {
                    "channels" => m.channels = parse_num(value)?,
                    "samples" => m.samples = parse_num(value)?,
                    "sinc_length" => m.sinc_len = parse_num(value)?,
                    "sinc_filters" => m.sinc_filters = parse_num(value)?,
                    "depth_multiplier" => m.depth = parse_num(value)?,
                    "pointwise_filters" => pointwise = Some(parse_num(value)?),
                    "classes" => m.classes = parse_num(value)?,
                    "dropout" => cfg.dropout_override = Some(parse_num(value)?),
                    "celu_alpha" => m.celu_alpha = parse_num(value)?,
                    "init_std_hz" => m.init_std_hz = parse_num(value)?,
                    "learning_rate" => t.adam.learning_rate = parse_num(value)?,
                    "beta1" => t.adam.beta1 = parse_num(value)?,
                    "beta2" => t.adam.beta2 = parse_num(value)?,
                    "adam_eps" => t.adam.eps = parse_num(value)?,
                    "weight_decay" => t.adam.weight_decay = parse_num(value)?,
                    "decoupled_weight_decay" => t.adam.decoupled = parse_bool(value)?,
                    "decay_all_parameters" => t.adam.decay_all = parse_bool(value)?,
                    "batch_size" => t.batch_size = parse_num(value)?,
                    "epochs" => t.epochs = parse_num(value)?,
                    "seed" => t.seed = parse_num(value)?,
                    "paradigm" => cfg.paradigm = value.parse().map_err(|e: crate::training::SplitError| e.to_string())?,
                    "subject" => cfg.subject = Some(parse_num(value)?),
                    "zscore" => {
                        cfg.zscore = match value {
                            "per_channel" => ZScoreMode::PerChannel,
                            "whole_trial" => ZScoreMode::WholeTrial,
                            _ => return Err("expected per_channel or whole_trial".into()),
                        }
                    }
                    _ => unreachable!("key list and match arms agree"),
                }
                Ok(())
            })();
            result.map_err(|msg| ConfigError::Value {
                line,
                key: key.to_string(),
                value: value.to_string(),
                msg,
            })?;
        }
        cfg.model.pointwise_filters = pointwise.unwrap_or(cfg.model.depth * cfg.model.sinc_filters);
        let paradigm = cfg.paradigm;
        cfg.set_paradigm(paradigm);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Switches paradigm, re-deriving dropout unless it was set explicitly.
    pub fn set_paradigm(&mut self, paradigm: Paradigm) {
        self.paradigm = paradigm;
        self.model.dropout = self.dropout_override.unwrap_or(paradigm.default_dropout());
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Every resolved setting, one `key = value` per line in a fixed order.
    pub fn canonical_text(&self) -> String {
        let (m, t) = (&self.model, &self.train);
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("channels", m.channels.to_string());
        kv("samples", m.samples.to_string());
        kv("sinc_length", m.sinc_len.to_string());
        kv("sinc_filters", m.sinc_filters.to_string());
        kv("depth_multiplier", m.depth.to_string());
        kv("pointwise_filters", m.pointwise_filters.to_string());
        kv("classes", m.classes.to_string());
        kv("dropout", m.dropout.to_string());
        kv("celu_alpha", m.celu_alpha.to_string());
        kv("init_std_hz", m.init_std_hz.to_string());
        kv("sampling_rate", m.sampling_rate.to_string());
        kv("cutoff_units", "normalized".into());
        kv("learning_rate", t.adam.learning_rate.to_string());
        kv("beta1", t.adam.beta1.to_string());
        kv("beta2", t.adam.beta2.to_string());
        kv("adam_eps", t.adam.eps.to_string());
        kv("weight_decay", t.adam.weight_decay.to_string());
        kv("decoupled_weight_decay", t.adam.decoupled.to_string());
        kv("decay_all_parameters", t.adam.decay_all.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("seed", t.seed.to_string());
        kv("paradigm", self.paradigm.to_string());
        kv("subject", self.subject.map_or("none".into(), |s| s.to_string()));
        kv("zscore", zscore_name(self.zscore).into());
        s
    }

    /// SHA-256 of [`canonical_text`](Self::canonical_text), hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

/// Sampling rate the network sees after preprocessing.
pub const MODEL_RATE: f64 = TARGET_RATE;
