use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::adam::{adam_step, AdamConfig, AdamError, AdamState};
use crate::data::TrialSet;
use crate::network::{Model, ModelError};
use crate::tape::Tape;

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 2020;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 20,
            epochs: 100,
            seed: DEFAULT_SEED,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(TrainError::Config("learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return Err(TrainError::Config("beta1 and beta2 must lie in [0, 1)".into()));
        }
        if !(self.adam.eps > 0.0) || !(self.adam.weight_decay >= 0.0) {
            return Err(TrainError::Config("adam_eps must be positive and weight_decay non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    Empty,
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("data is C = {data_c}, T = {data_t} but the model expects C = {model_c}, T = {model_t}")]
    Shape {
        data_c: usize,
        data_t: usize,
        model_c: usize,
        model_t: usize,
    },
    #[error("data has {data} classes but the model has {model}")]
    Classes { data: usize, model: usize },
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFinite { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Adam(#[from] AdamError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Mean training loss per epoch, weighted by batch size.
    pub loss_curve: Vec<f64>,
    pub steps: usize,
}

/// Mean cross-entropy and parameter gradients for one batch.
pub fn loss_and_grads(
    model: &Model,
    set: &TrialSet,
    indices: &[usize],
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Vec<Vec<f64>>), ModelError> {
    let (x, labels) = set.batch(indices);
    let mut tape = Tape::new();
    let input = tape.constant(x);
    let fwd = model.forward_on(&mut tape, input, training, true, rng)?;
    let loss = tape.softmax_cross_entropy(fwd.logits, &labels)?;
    tape.backward(loss)?;
    let grads = fwd
        .params
        .iter()
        .map(|&p| tape.grad(p).expect("parameters are trainable").to_vec())
        .collect();
    Ok((tape.value(loss).data()[0], grads))
}

/// Mini-batch Adam over `epochs` freshly shuffled passes. The final partial
/// batch of each epoch is kept. `progress` sees `(epoch, mean_loss)`.
pub fn train(
    model: &mut Model,
    set: &TrialSet,
    cfg: &TrainConfig,
    mut progress: impl FnMut(usize, f64),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(TrainError::Empty);
    }
    let mc = model.config();
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
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = AdamState::new(model.params());
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (loss, grads) = loss_and_grads(model, set, batch, true, &mut rng)?;
            if !loss.is_finite() {
                return Err(TrainError::NonFinite { epoch, step, loss });
            }
            adam_step(model.params_mut(), &grads, &mut state, &cfg.adam)?;
            total += loss * batch.len() as f64;
            step += 1;
        }
        let mean = total / set.len() as f64;
        progress(epoch, mean);
        curve.push(mean);
    }
    Ok(TrainOutcome {
        loss_curve: curve,
        steps: step,
    })
}

pub fn format_loss_curve(curve: &[f64]) -> String {
    curve
        .iter()
        .enumerate()
        .map(|(i, v)| format!("epoch {i} loss {v}\n"))
        .collect()
}

/// Reads `epoch <i> loss <v>` lines; `#` lines are skipped.
pub fn parse_loss_curve(text: &str) -> Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            ["epoch", i, "loss", v] if i.parse::<usize>() == Ok(out.len()) => {
                out.push(v.parse().map_err(|_| format!("line {}: bad loss {v:?}", n + 1))?)
            }
            _ => return Err(format!("line {}: expected `epoch {} loss <v>`", n + 1, out.len())),
        }
    }
    Ok(out)
}
