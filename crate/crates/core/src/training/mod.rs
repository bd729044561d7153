//! Optimization, data splits and evaluation.

pub mod adam;
pub mod eval;
pub mod split;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamError, AdamState};
pub use eval::{evaluate, evaluate_logits, EvalReport};
pub use split::{split_dataset, Paradigm, SplitError};
pub use train::{train, TrainConfig, TrainError, TrainOutcome, DEFAULT_SEED};
