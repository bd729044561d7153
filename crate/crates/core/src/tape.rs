//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Operations are appended to a [`Tape`] as they execute; every node stores
//! its forward value and the information its backward rule needs. Because a
//! node can only reference nodes created before it, the tape is always in
//! topological order and [`Tape::backward`] is a single reverse sweep.

use rand::Rng;

use crate::ops::conv::{self, Padding};
use crate::sinc;
use crate::tensor::{Tensor, TensorError};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which depthwise convolution to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Depthwise {
    /// `(C, 1)` kernels collapsing the channel axis (valid).
    Spatial,
    /// `(1, K)` kernels along time with same padding.
    Temporal,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Reshape(Var),
    Sum(Var),
    WeightedSum {
        input: Var,
        coeffs: Vec<f64>,
    },
    ConvTemporal {
        input: Var,
        kernels: Var,
        padding: Padding,
    },
    SpatialDepthwise {
        input: Var,
        weights: Var,
    },
    Pointwise {
        input: Var,
        weights: Var,
    },
    AvgPool {
        input: Var,
        width: usize,
    },
    LayerNorm {
        input: Var,
        gain: Var,
        bias: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Celu {
        input: Var,
        alpha: f64,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
    Linear {
        input: Var,
        weights: Var,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    SincKernels {
        cutoffs: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

type GradList = Vec<(Var, Vec<f64>)>;

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last [`backward`](Self::backward) target w.r.t. `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, inputs: &[Var], op: Op) -> Var {
        let rg = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, rg, op)
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = self.value(input).reshaped(shape)?;
        Ok(self.push_op(value, &[input], Op::Reshape(input)))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        self.push_op(Tensor::scalar(s), &[input], Op::Sum(input))
    }

    /// `sum_i coeffs[i] * input[i]`; a random projection for gradient checks.
    pub fn weighted_sum(&mut self, input: Var, coeffs: Vec<f64>) -> Result<Var, TensorError> {
        let x = self.value(input);
        if coeffs.len() != x.len() {
            return Err(TensorError::Axis {
                op: "weighted_sum",
                axis: "element",
                expected: x.len(),
                actual: coeffs.len(),
            });
        }
        let s = x.data().iter().zip(&coeffs).map(|(a, b)| a * b).sum();
        Ok(self.push_op(Tensor::scalar(s), &[input], Op::WeightedSum { input, coeffs }))
    }

    /// Batched cross-correlation along the time axis.
    ///
    /// `input` is `[B, M, H, T]`, `kernels` is `[K, L]` with `K` a multiple of
    /// `M`; output map `o` reads input map `o / (K / M)`. The result is
    /// `[B, K, H, T']` with `T' = T` (same) or `T - L + 1` (valid).
    pub fn conv_temporal(&mut self, input: Var, kernels: Var, padding: Padding) -> Result<Var, TensorError> {
        const OP: &str = "conv_temporal";
        let [b, m, h, t] = self.value(input).dims4(OP)?;
        let [k, l] = self.value(kernels).dims2(OP)?;
        if k % m != 0 {
            return Err(TensorError::Invalid {
                op: OP,
                msg: format!("kernel count {k} is not a multiple of the {m} input maps"),
            });
        }
        if padding == Padding::Valid && l > t {
            return Err(TensorError::Axis {
                op: OP,
                axis: "time",
                expected: l,
                actual: t,
            });
        }
        let x = self.value(input).data();
        let w = self.value(kernels).data();
        let mult = k / m;
        let (left, right) = padding.amounts(l);
        let t_out = padding.output_len(t, l);
        let symmetric = (0..k).all(|o| conv::is_symmetric(&w[o * l..(o + 1) * l]));
        let mut out = vec![0.0; b * k * h * t_out];
        let mut padded = Vec::with_capacity(t + l);
        let mut scratch = Vec::new();
        for bi in 0..b {
            for mi in 0..m {
                for hi in 0..h {
                    let row = &x[((bi * m + mi) * h + hi) * t..][..t];
                    conv::pad_into(row, left, right, &mut padded);
                    for j in 0..mult {
                        let o = mi * mult + j;
                        let kernel = &w[o * l..(o + 1) * l];
                        let dst = &mut out[((bi * k + o) * h + hi) * t_out..][..t_out];
                        if symmetric {
                            conv::correlate_symmetric(&padded, kernel, dst, &mut scratch);
                        } else {
                            conv::correlate(&padded, kernel, dst);
                        }
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, k, h, t_out], out)?;
        Ok(self.push_op(
            value,
            &[input, kernels],
            Op::ConvTemporal {
                input,
                kernels,
                padding,
            },
        ))
    }

    /// Depthwise convolution; output map `o` depends only on input map `o / D`.
    ///
    /// Spatial: `input [B, F, C, T]`, `weights [D*F, C]` -> `[B, D*F, 1, T]`.
    /// Temporal: `input [B, F, H, T]`, `weights [D*F, K]` -> `[B, D*F, H, T]`.
    pub fn depthwise_conv(&mut self, input: Var, weights: Var, kind: Depthwise) -> Result<Var, TensorError> {
        match kind {
            Depthwise::Temporal => self.conv_temporal(input, weights, Padding::Same),
            Depthwise::Spatial => self.spatial_depthwise(input, weights),
        }
    }

    fn spatial_depthwise(&mut self, input: Var, weights: Var) -> Result<Var, TensorError> {
        const OP: &str = "depthwise_conv(spatial)";
        let [b, f, c, t] = self.value(input).dims4(OP)?;
        let [o_maps, wc] = self.value(weights).dims2(OP)?;
        if wc != c {
            return Err(TensorError::Axis {
                op: OP,
                axis: "channel",
                expected: c,
                actual: wc,
            });
        }
        if o_maps % f != 0 {
            return Err(TensorError::Invalid {
                op: OP,
                msg: format!("{o_maps} output maps is not a multiple of the {f} input maps"),
            });
        }
        let depth = o_maps / f;
        let x = self.value(input).data();
        let w = self.value(weights).data();
        let mut out = vec![0.0; b * o_maps * t];
        for bi in 0..b {
            for o in 0..o_maps {
                let src = (bi * f + o / depth) * c * t;
                let dst = &mut out[(bi * o_maps + o) * t..][..t];
                for ci in 0..c {
                    let wv = w[o * c + ci];
                    for (d, &xv) in dst.iter_mut().zip(&x[src + ci * t..src + (ci + 1) * t]) {
                        *d += wv * xv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, o_maps, 1, t], out)?;
        Ok(self.push_op(value, &[input, weights], Op::SpatialDepthwise { input, weights }))
    }

    /// `1x1` convolution mixing maps: `input [B, M, H, T]`, `weights [F, M]` -> `[B, F, H, T]`.
    pub fn pointwise_conv(&mut self, input: Var, weights: Var) -> Result<Var, TensorError> {
        const OP: &str = "pointwise_conv";
        let [b, m, h, t] = self.value(input).dims4(OP)?;
        let [f, wm] = self.value(weights).dims2(OP)?;
        if wm != m {
            return Err(TensorError::Axis {
                op: OP,
                axis: "map",
                expected: m,
                actual: wm,
            });
        }
        let frame = h * t;
        let x = self.value(input).data();
        let w = self.value(weights).data();
        let mut out = vec![0.0; b * f * frame];
        for bi in 0..b {
            for fi in 0..f {
                let dst = &mut out[(bi * f + fi) * frame..][..frame];
                for mi in 0..m {
                    let wv = w[fi * m + mi];
                    let src = &x[(bi * m + mi) * frame..][..frame];
                    for (d, &xv) in dst.iter_mut().zip(src) {
                        *d += wv * xv;
                    }
                }
            }
        }
        let value = Tensor::new(vec![b, f, h, t], out)?;
        Ok(self.push_op(value, &[input, weights], Op::Pointwise { input, weights }))
    }

    /// Non-overlapping mean pooling along the last axis.
    pub fn avg_pool_time(&mut self, input: Var, width: usize) -> Result<Var, TensorError> {
        const OP: &str = "avg_pool_time";
        let x = self.value(input);
        let t = *x.shape().last().expect("tensors have rank >= 1");
        if width == 0 || t % width != 0 {
            return Err(TensorError::Invalid {
                op: OP,
                msg: format!("time extent {t} is not divisible by pool width {width}"),
            });
        }
        let scale = 1.0 / width as f64;
        let data: Vec<f64> = x
            .data()
            .chunks_exact(width)
            .map(|w| w.iter().sum::<f64>() * scale)
            .collect();
        let mut shape = x.shape().to_vec();
        *shape.last_mut().unwrap() = t / width;
        let value = Tensor::new(shape, data)?;
        Ok(self.push_op(value, &[input], Op::AvgPool { input, width }))
    }

    /// Per-sample normalization over every non-batch element, followed by a
    /// per-map affine transform (`gain`, `bias` indexed by axis 1).
    pub fn layer_norm(&mut self, input: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        const OP: &str = "layer_norm";
        let x = self.value(input);
        if x.rank() < 2 {
            return Err(TensorError::Rank {
                op: OP,
                expected: 2,
                shape: x.shape().to_vec(),
            });
        }
        let b = x.shape()[0];
        let f = x.shape()[1];
        for (v, name) in [(gain, "gain"), (bias, "bias")] {
            let len = self.value(v).len();
            if len != f {
                return Err(TensorError::Axis {
                    op: OP,
                    axis: name,
                    expected: f,
                    actual: len,
                });
            }
        }
        let x = self.value(input);
        let n = x.len() / b;
        let inner = n / f;
        let g = self.value(gain).data();
        let be = self.value(bias).data();
        let mut normalized = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; b];
        let mut out = vec![0.0; x.len()];
        for bi in 0..b {
            let xs = &x.data()[bi * n..(bi + 1) * n];
            let mean = xs.iter().sum::<f64>() / n as f64;
            let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let r = 1.0 / (var + eps).sqrt();
            inv_std[bi] = r;
            for (i, &v) in xs.iter().enumerate() {
                let xhat = (v - mean) * r;
                let fi = i / inner;
                normalized[bi * n + i] = xhat;
                out[bi * n + i] = g[fi] * xhat + be[fi];
            }
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push_op(
            value,
            &[input, gain, bias],
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            },
        ))
    }

    /// `max(0, x) + min(0, alpha (exp(x / alpha) - 1))`.
    pub fn celu(&mut self, input: Var, alpha: f64) -> Result<Var, TensorError> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(TensorError::Invalid {
                op: "celu",
                msg: format!("alpha must be positive, got {alpha}"),
            });
        }
        let x = self.value(input);
        let data = x.data().iter().map(|&v| celu(v, alpha)).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[input], Op::Celu { input, alpha }))
    }

    /// Inverted dropout. Outside training, or with `p == 0`, this is the identity
    /// and records nothing.
    pub fn dropout(&mut self, input: Var, p: f64, training: bool, rng: &mut impl Rng) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Invalid {
                op: "dropout",
                msg: format!("probability must be in [0, 1), got {p}"),
            });
        }
        if !training || p == 0.0 {
            return Ok(input);
        }
        let keep = 1.0 / (1.0 - p);
        let x = self.value(input);
        let mask: Vec<f64> = (0..x.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let data = x.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(x.shape().to_vec(), data)?;
        Ok(self.push_op(value, &[input], Op::Dropout { input, mask }))
    }

    /// Fully connected layer without bias: `input [B, ...]` is flattened per
    /// sample to `P` features and multiplied by `weights [N, P]`.
    pub fn linear(&mut self, input: Var, weights: Var) -> Result<Var, TensorError> {
        const OP: &str = "linear";
        let x = self.value(input);
        let b = x.shape()[0];
        let p = x.len() / b;
        let [n, wp] = self.value(weights).dims2(OP)?;
        if wp != p {
            return Err(TensorError::Axis {
                op: OP,
                axis: "feature",
                expected: p,
                actual: wp,
            });
        }
        let w = self.value(weights).data();
        let mut out = vec![0.0; b * n];
        for bi in 0..b {
            let row = &x.data()[bi * p..(bi + 1) * p];
            for ni in 0..n {
                out[bi * n + ni] = conv::dot(&w[ni * p..(ni + 1) * p], row);
            }
        }
        let value = Tensor::new(vec![b, n], out)?;
        Ok(self.push_op(value, &[input, weights], Op::Linear { input, weights }))
    }

    /// Mean categorical cross-entropy of `logits [B, N]` against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, TensorError> {
        const OP: &str = "softmax_cross_entropy";
        let [b, n] = self.value(logits).dims2(OP)?;
        if labels.len() != b {
            return Err(TensorError::Axis {
                op: OP,
                axis: "batch",
                expected: b,
                actual: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n) {
            return Err(TensorError::Invalid {
                op: OP,
                msg: format!("label {bad} out of range for {n} classes"),
            });
        }
        let z = self.value(logits).data();
        let mut probs = vec![0.0; b * n];
        let mut loss = 0.0;
        for bi in 0..b {
            let row = &z[bi * n..(bi + 1) * n];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
            for (ni, &v) in row.iter().enumerate() {
                probs[bi * n + ni] = (v - max).exp() / denom;
            }
            loss -= row[labels[bi]] - max - denom.ln();
        }
        loss /= b as f64;
        Ok(self.push_op(
            Tensor::scalar(loss),
            &[logits],
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
        ))
    }

    /// Materializes `[F, L]` sinc kernels from raw cutoff pairs `[F, 2]`.
    pub fn sinc_kernels(&mut self, cutoffs: Var, kernel_len: usize) -> Result<Var, TensorError> {
        const OP: &str = "sinc_kernels";
        let [f, two] = self.value(cutoffs).dims2(OP)?;
        if two != 2 {
            return Err(TensorError::Axis {
                op: OP,
                axis: "cutoff pair",
                expected: 2,
                actual: two,
            });
        }
        if kernel_len < 2 {
            return Err(TensorError::Invalid {
                op: OP,
                msg: format!("kernel length must be at least 2, got {kernel_len}"),
            });
        }
        let raw = self.value(cutoffs).data();
        let mut data = Vec::with_capacity(f * kernel_len);
        for pair in raw.chunks_exact(2) {
            let (a, b) = sinc::reparameterize_cutoffs(pair[0], pair[1]);
            data.extend(sinc::kernel_unchecked(a, b, kernel_len));
        }
        let value = Tensor::new(vec![f, kernel_len], data)?;
        Ok(self.push_op(value, &[cutoffs], Op::SincKernels { cutoffs }))
    }

    /// Back-propagates from the scalar `loss`, replacing any earlier gradients.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        let len = self.value(loss).len();
        if len != 1 {
            return Err(TensorError::Invalid {
                op: "backward",
                msg: format!("loss must hold one element, got {len}"),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(upstream) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.backward_node(i, &upstream);
            self.nodes[i].grad = Some(upstream);
            for (v, g) in contributions {
                let node = &mut self.nodes[v.0];
                if !node.requires_grad {
                    continue;
                }
                match &mut node.grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => node.grad = Some(g),
                }
            }
        }
        Ok(())
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn backward_node(&self, i: usize, dy: &[f64]) -> GradList {
        let node = &self.nodes[i];
        if !node.requires_grad {
            return Vec::new();
        }
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Reshape(input) => vec![(*input, dy.to_vec())],
            Op::Sum(input) => vec![(*input, vec![dy[0]; self.value(*input).len()])],
            Op::WeightedSum { input, coeffs } => {
                vec![(*input, coeffs.iter().map(|c| c * dy[0]).collect())]
            }
            Op::ConvTemporal {
                input,
                kernels,
                padding,
            } => self.conv_temporal_backward(*input, *kernels, *padding, dy),
            Op::SpatialDepthwise { input, weights } => self.spatial_backward(*input, *weights, dy),
            Op::Pointwise { input, weights } => self.pointwise_backward(*input, *weights, dy),
            Op::AvgPool { input, width } => {
                let scale = 1.0 / *width as f64;
                let g = dy
                    .iter()
                    .flat_map(|&d| std::iter::repeat_n(d * scale, *width))
                    .collect();
                vec![(*input, g)]
            }
            Op::LayerNorm {
                input,
                gain,
                bias,
                normalized,
                inv_std,
            } => self.layer_norm_backward(*input, *gain, *bias, normalized, inv_std, dy),
            Op::Celu { input, alpha } => {
                let x = self.value(*input).data();
                let g = x
                    .iter()
                    .zip(dy)
                    .map(|(&v, &d)| if v > 0.0 { d } else { d * (v / alpha).exp() })
                    .collect();
                vec![(*input, g)]
            }
            Op::Dropout { input, mask } => {
                vec![(*input, dy.iter().zip(mask).map(|(d, m)| d * m).collect())]
            }
            Op::Linear { input, weights } => self.linear_backward(*input, *weights, dy),
            Op::SoftmaxCrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let n = probs.len() / labels.len();
                let scale = dy[0] / labels.len() as f64;
                let mut g: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (bi, &l) in labels.iter().enumerate() {
                    g[bi * n + l] -= scale;
                }
                vec![(*logits, g)]
            }
            Op::SincKernels { cutoffs } => {
                let raw = self.value(*cutoffs).data();
                let l = node.value.shape()[1];
                let g = raw
                    .chunks_exact(2)
                    .zip(dy.chunks_exact(l))
                    .flat_map(|(pair, up)| {
                        let (a, b) = sinc::kernel_gradients(up, pair[0], pair[1]);
                        [a, b]
                    })
                    .collect();
                vec![(*cutoffs, g)]
            }
        }
    }

    fn conv_temporal_backward(&self, input: Var, kernels: Var, padding: Padding, dy: &[f64]) -> GradList {
        let [b, m, h, t] = self.value(input).dims4("conv_temporal").unwrap();
        let [k, l] = self.value(kernels).dims2("conv_temporal").unwrap();
        let x = self.value(input).data();
        let w = self.value(kernels).data();
        let mult = k / m;
        let (left, right) = padding.amounts(l);
        let t_out = padding.output_len(t, l);
        let want_x = self.rg(input);
        let want_w = self.rg(kernels);
        let mut dx = if want_x { vec![0.0; x.len()] } else { Vec::new() };
        let mut dw = if want_w { vec![0.0; w.len()] } else { Vec::new() };
        let mut padded = Vec::with_capacity(t + l);
        let mut dpadded = vec![0.0; t + left + right];
        for bi in 0..b {
            for mi in 0..m {
                for hi in 0..h {
                    let row_at = ((bi * m + mi) * h + hi) * t;
                    if want_w {
                        conv::pad_into(&x[row_at..row_at + t], left, right, &mut padded);
                    }
                    if want_x {
                        dpadded.fill(0.0);
                    }
                    for j in 0..mult {
                        let o = mi * mult + j;
                        let up = &dy[((bi * k + o) * h + hi) * t_out..][..t_out];
                        if want_w {
                            conv::accumulate_kernel_grad(&padded, up, &mut dw[o * l..(o + 1) * l]);
                        }
                        if want_x {
                            conv::accumulate_input_grad(&w[o * l..(o + 1) * l], up, &mut dpadded);
                        }
                    }
                    if want_x {
                        dx[row_at..row_at + t].copy_from_slice(&dpadded[left..left + t]);
                    }
                }
            }
        }
        let mut grads = Vec::new();
        if want_x {
            grads.push((input, dx));
        }
        if want_w {
            grads.push((kernels, dw));
        }
        grads
    }

    fn spatial_backward(&self, input: Var, weights: Var, dy: &[f64]) -> GradList {
        let [b, f, c, t] = self.value(input).dims4("depthwise_conv").unwrap();
        let [o_maps, _] = self.value(weights).dims2("depthwise_conv").unwrap();
        let depth = o_maps / f;
        let x = self.value(input).data();
        let w = self.value(weights).data();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        for bi in 0..b {
            for o in 0..o_maps {
                let src = (bi * f + o / depth) * c * t;
                let up = &dy[(bi * o_maps + o) * t..][..t];
                for ci in 0..c {
                    let xr = &x[src + ci * t..src + (ci + 1) * t];
                    dw[o * c + ci] += conv::dot(up, xr);
                    let wv = w[o * c + ci];
                    for (g, &u) in dx[src + ci * t..src + (ci + 1) * t].iter_mut().zip(up) {
                        *g += wv * u;
                    }
                }
            }
        }
        vec![(input, dx), (weights, dw)]
    }

    fn pointwise_backward(&self, input: Var, weights: Var, dy: &[f64]) -> GradList {
        let [b, m, h, t] = self.value(input).dims4("pointwise_conv").unwrap();
        let [f, _] = self.value(weights).dims2("pointwise_conv").unwrap();
        let frame = h * t;
        let x = self.value(input).data();
        let w = self.value(weights).data();
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        for bi in 0..b {
            for fi in 0..f {
                let up = &dy[(bi * f + fi) * frame..][..frame];
                for mi in 0..m {
                    let at = (bi * m + mi) * frame;
                    dw[fi * m + mi] += conv::dot(up, &x[at..at + frame]);
                    let wv = w[fi * m + mi];
                    for (g, &u) in dx[at..at + frame].iter_mut().zip(up) {
                        *g += wv * u;
                    }
                }
            }
        }
        vec![(input, dx), (weights, dw)]
    }

    fn layer_norm_backward(
        &self,
        input: Var,
        gain: Var,
        bias: Var,
        normalized: &[f64],
        inv_std: &[f64],
        dy: &[f64],
    ) -> GradList {
        let x = self.value(input);
        let b = x.shape()[0];
        let f = x.shape()[1];
        let n = x.len() / b;
        let inner = n / f;
        let g = self.value(gain).data();
        let mut dx = vec![0.0; x.len()];
        let mut dgain = vec![0.0; f];
        let mut dbias = vec![0.0; f];
        let mut dxhat = vec![0.0; n];
        for bi in 0..b {
            let xh = &normalized[bi * n..(bi + 1) * n];
            let up = &dy[bi * n..(bi + 1) * n];
            let mut mean_d = 0.0;
            let mut mean_dx = 0.0;
            for i in 0..n {
                let fi = i / inner;
                dgain[fi] += up[i] * xh[i];
                dbias[fi] += up[i];
                dxhat[i] = up[i] * g[fi];
                mean_d += dxhat[i];
                mean_dx += dxhat[i] * xh[i];
            }
            mean_d /= n as f64;
            mean_dx /= n as f64;
            let r = inv_std[bi];
            for i in 0..n {
                dx[bi * n + i] = r * (dxhat[i] - mean_d - xh[i] * mean_dx);
            }
        }
        vec![(input, dx), (gain, dgain), (bias, dbias)]
    }

    fn linear_backward(&self, input: Var, weights: Var, dy: &[f64]) -> GradList {
        let x = self.value(input);
        let b = x.shape()[0];
        let p = x.len() / b;
        let w = self.value(weights).data();
        let n = w.len() / p;
        let mut dx = vec![0.0; x.len()];
        let mut dw = vec![0.0; w.len()];
        for bi in 0..b {
            let row = &x.data()[bi * p..(bi + 1) * p];
            for ni in 0..n {
                let d = dy[bi * n + ni];
                for (g, &xv) in dw[ni * p..(ni + 1) * p].iter_mut().zip(row) {
                    *g += d * xv;
                }
                for (g, &wv) in dx[bi * p..(bi + 1) * p].iter_mut().zip(&w[ni * p..(ni + 1) * p]) {
                    *g += d * wv;
                }
            }
        }
        vec![(input, dx), (weights, dw)]
    }
}

#[inline]
pub fn celu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * ((x / alpha).exp() - 1.0)
    }
}
