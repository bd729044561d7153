//! The four-block Sinc-EEGNet.
//!
//! | block | layers                                                   | output            |
//! |-------|----------------------------------------------------------|-------------------|
//! | 1     | sinc conv `(1, L)`, avg pool `(1, 4)`, layer norm, CELU, dropout | `(F1, C, T/4)`    |
//! | 2     | depthwise `(C, 1)`, avg pool, layer norm, CELU, dropout   | `(D*F1, 1, T/16)` |
//! | 3     | depthwise `(1, 16)`, layer norm, CELU, dropout, pointwise `(1, 1)`, avg pool, layer norm, CELU, dropout | `(F2, 1, T/64)` |
//! | 4     | flatten, fully connected                                 | `N`               |
//!
//! No convolution or dense layer carries a bias.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ops::conv::Padding;
use crate::sinc::{CutoffPrior, SincFilterBank};
use crate::tape::{Depthwise, Tape, Var};
use crate::tensor::{Tensor, TensorError};

pub const POOL_WIDTH: usize = 4;
pub const TEMPORAL_KERNEL: usize = 16;
pub const LAYER_NORM_EPS: f64 = 1e-5;
/// Three pooling stages of width 4.
pub const TIME_DIVISOR: usize = POOL_WIDTH * POOL_WIDTH * POOL_WIDTH;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model config: {field} {message}")]
    Config { field: &'static str, message: String },
    #[error(transparent)]
    Shape(#[from] TensorError),
    #[error("parameter {name}: expected {expected} values, got {actual}")]
    ParameterLength {
        name: &'static str,
        expected: usize,
        actual: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// EEG channels `C`.
    pub channels: usize,
    /// Time samples per trial `T`.
    pub samples: usize,
    /// Sinc kernel length `L`.
    pub sinc_len: usize,
    /// Number of sinc filters `F1`.
    pub sinc_filters: usize,
    /// Spatial filters per band `D`.
    pub depth: usize,
    /// Pointwise filters `F2`.
    pub pointwise_filters: usize,
    /// Classes `N`.
    pub classes: usize,
    pub dropout: f64,
    pub celu_alpha: f64,
    /// Sampling rate of the network input, Hz.
    pub sampling_rate: f64,
    /// Standard deviation of the cutoff initialization, Hz.
    pub init_std_hz: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let sampling_rate = 128.0;
        Self {
            channels: 22,
            samples: 512,
            sinc_len: 64,
            sinc_filters: 32,
            depth: 2,
            pointwise_filters: 64,
            classes: 4,
            dropout: 0.25,
            celu_alpha: 1.0,
            sampling_rate,
            init_std_hz: CutoffPrior::for_sampling_rate(sampling_rate).std_hz,
        }
    }
}

fn config_err(field: &'static str, message: impl Into<String>) -> ModelError {
    ModelError::Config {
        field,
        message: message.into(),
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.channels == 0 {
            return Err(config_err("channels (C)", "must be at least 1"));
        }
        if self.samples == 0 || self.samples % TIME_DIVISOR != 0 {
            return Err(config_err(
                "samples (T)",
                format!("= {} must be a positive multiple of {TIME_DIVISOR}", self.samples),
            ));
        }
        if self.sinc_len < 2 || self.sinc_len > self.samples {
            return Err(config_err(
                "sinc_length (L)",
                format!("= {} must lie in [2, T = {}]", self.sinc_len, self.samples),
            ));
        }
        if self.sinc_filters == 0 {
            return Err(config_err("sinc_filters (F1)", "must be at least 1"));
        }
        if self.depth == 0 {
            return Err(config_err("depth_multiplier (D)", "must be at least 1"));
        }
        if self.pointwise_filters == 0 {
            return Err(config_err("pointwise_filters (F2)", "must be at least 1"));
        }
        if self.classes < 2 {
            return Err(config_err("classes (N)", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(config_err("dropout", format!("= {} must lie in [0, 1)", self.dropout)));
        }
        if !(self.celu_alpha > 0.0 && self.celu_alpha.is_finite()) {
            return Err(config_err("celu_alpha", "must be positive"));
        }
        if !(self.sampling_rate > 0.0 && self.sampling_rate.is_finite()) {
            return Err(config_err("sampling_rate", "must be positive"));
        }
        if !(self.init_std_hz >= 0.0 && self.init_std_hz.is_finite()) {
            return Err(config_err("init_std_hz", "must be finite and non-negative"));
        }
        Ok(())
    }

    /// `D * F1`
    pub fn depthwise_maps(&self) -> usize {
        self.depth * self.sinc_filters
    }

    /// Features entering the dense layer, `F2 * T / 64`.
    pub fn dense_inputs(&self) -> usize {
        self.pointwise_filters * self.samples / TIME_DIVISOR
    }
}

/// How the optimizer treats a parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Raw sinc cutoff pairs.
    Cutoff,
    NormGain,
    NormBias,
    /// Convolution or dense weights.
    Weight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: &'static str,
    pub kind: ParamKind,
    pub value: Tensor,
}

/// One row of the parameter table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerParams {
    pub layer: &'static str,
    pub formula: &'static str,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParameterTable {
    pub rows: Vec<LayerParams>,
    pub total: usize,
}

/// Parameter shapes in build order. Layer-norm gain and bias are separate
/// tensors but one table row.
fn parameter_specs(c: &ModelConfig) -> Vec<(&'static str, ParamKind, Vec<usize>)> {
    let df1 = c.depthwise_maps();
    vec![
        ("sinc.cutoffs", ParamKind::Cutoff, vec![c.sinc_filters, 2]),
        ("block1.norm.gain", ParamKind::NormGain, vec![c.sinc_filters]),
        ("block1.norm.bias", ParamKind::NormBias, vec![c.sinc_filters]),
        ("block2.spatial", ParamKind::Weight, vec![df1, c.channels]),
        ("block2.norm.gain", ParamKind::NormGain, vec![df1]),
        ("block2.norm.bias", ParamKind::NormBias, vec![df1]),
        ("block3.temporal", ParamKind::Weight, vec![df1, TEMPORAL_KERNEL]),
        ("block3.temporal_norm.gain", ParamKind::NormGain, vec![df1]),
        ("block3.temporal_norm.bias", ParamKind::NormBias, vec![df1]),
        ("block3.pointwise", ParamKind::Weight, vec![c.pointwise_filters, df1]),
        ("block3.norm.gain", ParamKind::NormGain, vec![c.pointwise_filters]),
        ("block3.norm.bias", ParamKind::NormBias, vec![c.pointwise_filters]),
        ("block4.dense", ParamKind::Weight, vec![c.classes, c.dense_inputs()]),
    ]
}

/// Per-layer trainable parameter counts.
pub fn count_parameters(c: &ModelConfig) -> ParameterTable {
    let df1 = c.depthwise_maps();
    let rows = vec![
        LayerParams {
            layer: "sinc convolution",
            formula: "2*F1",
            count: 2 * c.sinc_filters,
        },
        LayerParams {
            layer: "layer norm (block 1)",
            formula: "2*F1",
            count: 2 * c.sinc_filters,
        },
        LayerParams {
            layer: "depthwise convolution (C,1)",
            formula: "C*D*F1",
            count: c.channels * df1,
        },
        LayerParams {
            layer: "layer norm (block 2)",
            formula: "2*D*F1",
            count: 2 * df1,
        },
        LayerParams {
            layer: "depthwise convolution (1,16)",
            formula: "16*D*F1",
            count: TEMPORAL_KERNEL * df1,
        },
        LayerParams {
            layer: "layer norm (separable)",
            formula: "2*D*F1",
            count: 2 * df1,
        },
        LayerParams {
            layer: "pointwise convolution (1,1)",
            formula: "F2*(D*F1)",
            count: c.pointwise_filters * df1,
        },
        LayerParams {
            layer: "layer norm (block 3)",
            formula: "2*F2",
            count: 2 * c.pointwise_filters,
        },
        LayerParams {
            layer: "fully connected",
            formula: "N*F2*T/64",
            count: c.classes * c.dense_inputs(),
        },
    ];
    let total = rows.iter().map(|r| r.count).sum();
    ParameterTable { rows, total }
}

fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.random_range(-limit..limit))
}

/// Handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// One leaf per parameter, in build order.
    pub params: Vec<Var>,
    /// Named intermediate activations in execution order.
    pub activations: Vec<(&'static str, Var)>,
    pub logits: Var,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Parameter>,
}

impl Model {
    /// Builds a freshly initialized model: sinc cutoffs from the Gaussian
    /// prior, Glorot-uniform weights, unit gains and zero biases.
    pub fn build(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let prior = CutoffPrior {
            mean_hz: config.sampling_rate / 4.0,
            std_hz: config.init_std_hz,
        };
        let bank = SincFilterBank::init(config.sinc_filters, config.sinc_len, config.sampling_rate, prior, seed)
            .map_err(|e| config_err("sinc_filters (F1)", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x5EE6));
        let c = &config;
        let df1 = c.depthwise_maps();
        let params = parameter_specs(c)
            .into_iter()
            .map(|(name, kind, shape)| {
                let value = match (name, kind) {
                    (_, ParamKind::Cutoff) => Tensor::new(shape, bank.to_interleaved()).unwrap(),
                    (_, ParamKind::NormGain) => Tensor::full(&shape, 1.0),
                    (_, ParamKind::NormBias) => Tensor::zeros(&shape),
                    ("block2.spatial", _) => glorot_uniform(&shape, c.channels, c.channels * c.depth, &mut rng),
                    ("block3.temporal", _) => glorot_uniform(&shape, TEMPORAL_KERNEL, TEMPORAL_KERNEL, &mut rng),
                    ("block3.pointwise", _) => glorot_uniform(&shape, df1, c.pointwise_filters, &mut rng),
                    _ => glorot_uniform(&shape, c.dense_inputs(), c.classes, &mut rng),
                };
                Parameter { name, kind, value }
            })
            .collect();
        Ok(Self { config, params })
    }

    /// Reassembles a model from parameter values in build order.
    pub fn from_parts(config: ModelConfig, values: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        config.validate()?;
        let specs = parameter_specs(&config);
        if values.len() != specs.len() {
            return Err(config_err(
                "parameters",
                format!("expected {} tensors, got {}", specs.len(), values.len()),
            ));
        }
        let params = specs
            .into_iter()
            .zip(values)
            .map(|((name, kind, shape), data)| {
                let expected: usize = shape.iter().product();
                if data.len() != expected {
                    return Err(ModelError::ParameterLength {
                        name,
                        expected,
                        actual: data.len(),
                    });
                }
                Ok(Parameter {
                    name,
                    kind,
                    value: Tensor::new(shape, data)?,
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn filter_bank(&self) -> SincFilterBank {
        SincFilterBank::from_interleaved(
            self.params[0].value.data(),
            self.config.sinc_len,
            self.config.sampling_rate,
        )
    }

    /// Records the forward pass on `tape`. `batch` must be `[B, C, T]`.
    /// Parameters become trainable leaves when `track_params` is set.
    pub fn forward_on(
        &self,
        tape: &mut Tape,
        batch: Var,
        training: bool,
        track_params: bool,
        rng: &mut impl Rng,
    ) -> Result<Forward, ModelError> {
        let c = &self.config;
        let shape = tape.value(batch).shape().to_vec();
        match shape.as_slice() {
            &[_, ch, t] if ch == c.channels && t == c.samples => {}
            _ => {
                return Err(TensorError::Invalid {
                    op: "forward",
                    msg: format!(
                        "batch shape {shape:?} does not match [B, {}, {}]",
                        c.channels, c.samples
                    ),
                }
                .into())
            }
        }
        let b = shape[0];
        let p: Vec<Var> = self
            .params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), track_params))
            .collect();
        let mut acts = Vec::new();
        let p_drop = c.dropout;
        let alpha = c.celu_alpha;

        let x = tape.reshape(batch, &[b, 1, c.channels, c.samples])?;
        acts.push(("reshape", x));

        // block 1
        let kernels = tape.sinc_kernels(p[0], c.sinc_len)?;
        let x = tape.conv_temporal(x, kernels, Padding::Same)?;
        acts.push(("sinc_conv", x));
        let x = tape.avg_pool_time(x, POOL_WIDTH)?;
        let x = tape.layer_norm(x, p[1], p[2], LAYER_NORM_EPS)?;
        let x = tape.celu(x, alpha)?;
        let x = tape.dropout(x, p_drop, training, rng)?;
        acts.push(("block1", x));

        // block 2
        let x = tape.depthwise_conv(x, p[3], Depthwise::Spatial)?;
        acts.push(("spatial", x));
        let x = tape.avg_pool_time(x, POOL_WIDTH)?;
        let x = tape.layer_norm(x, p[4], p[5], LAYER_NORM_EPS)?;
        let x = tape.celu(x, alpha)?;
        let x = tape.dropout(x, p_drop, training, rng)?;
        acts.push(("block2", x));

        // block 3
        let x = tape.depthwise_conv(x, p[6], Depthwise::Temporal)?;
        let x = tape.layer_norm(x, p[7], p[8], LAYER_NORM_EPS)?;
        let x = tape.celu(x, alpha)?;
        let x = tape.dropout(x, p_drop, training, rng)?;
        acts.push(("temporal", x));
        let x = tape.pointwise_conv(x, p[9])?;
        acts.push(("pointwise", x));
        let x = tape.avg_pool_time(x, POOL_WIDTH)?;
        let x = tape.layer_norm(x, p[10], p[11], LAYER_NORM_EPS)?;
        let x = tape.celu(x, alpha)?;
        let x = tape.dropout(x, p_drop, training, rng)?;
        acts.push(("block3", x));

        // block 4
        let x = tape.reshape(x, &[b, c.dense_inputs()])?;
        acts.push(("flatten", x));
        let logits = tape.linear(x, p[12])?;
        acts.push(("logits", logits));

        Ok(Forward {
            params: p,
            activations: acts,
            logits,
        })
    }

    /// Logits `[B, N]` for `batch [B, C, T]`.
    pub fn forward(&self, batch: &Tensor, training: bool, rng: &mut impl Rng) -> Result<Tensor, ModelError> {
        let mut tape = Tape::new();
        let input = tape.constant(batch.clone());
        let fwd = self.forward_on(&mut tape, input, training, false, rng)?;
        Ok(tape.value(fwd.logits).clone())
    }
}
