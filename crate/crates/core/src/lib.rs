//! Sinc-EEGNet: a compact CNN for motor-imagery EEG whose first layer is a
//! bank of learnable sinc bandpass filters.
//!
//! The crate bundles everything needed to train and evaluate the network on
//! a laptop: a small reverse-mode autodiff engine ([`tape`]), the sinc filter
//! bank ([`sinc`]), the four-block model ([`network`]), training and
//! evaluation ([`training`]), and EEG trial I/O plus preprocessing ([`data`]).

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod network;
pub mod ops;
pub mod sinc;
pub mod tape;
pub mod tensor;
pub mod training;

#[cfg(test)]
pub(crate) mod testutil;

pub use network::{Model, ModelConfig};
pub use tape::{Tape, Var};
pub use tensor::{Tensor, TensorError};
