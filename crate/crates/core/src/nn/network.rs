//! Dense feedforward networks and input-convex networks.
//!
//! Both architectures share one layer layout. A layer maps the previous hidden
//! state `z` (and, for ICNNs, the raw input `s` through a shortcut) to
//!
//! ```text
//! z' = act(W_z z + W_s s + b)
//! ```
//!
//! For an ICNN the first hidden state is empty, so the first pre-activation is
//! `W_s s + b`. Every `W_z` is kept element-wise non-negative, which together
//! with convex non-decreasing activations makes each output convex in `s`.
//! For an FNN the first hidden state is `s` itself and there are no shortcuts.

use rand::RngExt;
use serde::{Deserialize, Serialize};

use super::{Activation, Matrix, Predictor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Icnn,
    Fnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `W_z`, shape `out × width(z)`.
    pub hidden_weights: Matrix,
    /// `W_s`, shape `out × input_dim`; present only in ICNNs.
    pub input_weights: Option<Matrix>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn width(&self) -> usize {
        self.bias.len()
    }

    fn param_count(&self) -> usize {
        self.hidden_weights.data.len()
            + self.input_weights.as_ref().map_or(0, |w| w.data.len())
            + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    /// Targets are absolute values; the final activation is then non-negative.
    pub predicts_absolute: bool,
}

/// Per-layer activations kept from a forward pass for backpropagation.
struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Network {
    /// Randomly initialised ICNN with relu hidden layers.
    ///
    /// The output activation is relu when `predicts_absolute`, linear otherwise.
    pub fn icnn<R: rand::Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        predicts_absolute: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let output_act = if predicts_absolute {
            Activation::Relu
        } else {
            Activation::Linear
        };
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = 0;
        for (i, &width) in hidden.iter().chain(std::iter::once(&output_dim)).enumerate() {
            let fan_in = (prev + input_dim).max(1);
            let bound = (1.0 / fan_in as f64).sqrt();
            let mut hidden_weights = Matrix::zeros(width, prev);
            for w in &mut hidden_weights.data {
                *w = rng.random_range(-bound..bound).abs();
            }
            let mut input_weights = Matrix::zeros(width, input_dim);
            for w in &mut input_weights.data {
                *w = rng.random_range(-bound..bound);
            }
            let bias = (0..width).map(|_| rng.random_range(-bound..bound)).collect();
            let activation = if i == hidden.len() {
                output_act
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                hidden_weights,
                input_weights: Some(input_weights),
                bias,
                activation,
            });
            prev = width;
        }
        Self::from_layers(Architecture::Icnn, input_dim, layers, predicts_absolute)
    }

    /// Randomly initialised FNN with relu hidden layers and a linear output.
    pub fn fnn<R: rand::Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut prev = input_dim;
        for (i, &width) in hidden.iter().chain(std::iter::once(&output_dim)).enumerate() {
            let bound = (1.0 / prev.max(1) as f64).sqrt();
            let mut hidden_weights = Matrix::zeros(width, prev);
            for w in &mut hidden_weights.data {
                *w = rng.random_range(-bound..bound);
            }
            let bias = (0..width).map(|_| rng.random_range(-bound..bound)).collect();
            let activation = if i == hidden.len() {
                Activation::Linear
            } else {
                Activation::Relu
            };
            layers.push(Layer {
                hidden_weights,
                input_weights: None,
                bias,
                activation,
            });
            prev = width;
        }
        Self::from_layers(Architecture::Fnn, input_dim, layers, false)
    }

    /// Assembles a network from explicit layers, checking shapes and the
    /// architecture invariants.
    pub fn from_layers(
        architecture: Architecture,
        input_dim: usize,
        layers: Vec<Layer>,
        predicts_absolute: bool,
    ) -> Result<Self> {
        let net = Self {
            architecture,
            input_dim,
            layers,
            predicts_absolute,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidModel("network has no layers".into()));
        }
        let mut prev = match self.architecture {
            Architecture::Icnn => 0,
            Architecture::Fnn => self.input_dim,
        };
        for (i, layer) in self.layers.iter().enumerate() {
            let width = layer.width();
            let hw = &layer.hidden_weights;
            if !hw.is_consistent() || hw.rows != width || hw.cols != prev {
                return Err(Error::InvalidModel(format!(
                    "layer {i}: hidden weights are {}x{}, expected {width}x{prev}",
                    hw.rows, hw.cols
                )));
            }
            match (self.architecture, &layer.input_weights) {
                (Architecture::Icnn, Some(ws)) => {
                    if !ws.is_consistent() || ws.rows != width || ws.cols != self.input_dim {
                        return Err(Error::InvalidModel(format!(
                            "layer {i}: shortcut weights are {}x{}, expected {width}x{}",
                            ws.rows, ws.cols, self.input_dim
                        )));
                    }
                }
                (Architecture::Icnn, None) => {
                    return Err(Error::InvalidModel(format!(
                        "layer {i}: ICNN layers need shortcut weights"
                    )))
                }
                (Architecture::Fnn, Some(_)) => {
                    return Err(Error::InvalidModel(format!(
                        "layer {i}: FNN layers have no shortcut weights"
                    )))
                }
                (Architecture::Fnn, None) => {}
            }
            if self.architecture == Architecture::Icnn {
                if hw.data.iter().any(|w| *w < 0.0) {
                    return Err(Error::InvalidModel(format!(
                        "layer {i}: negative hidden weight in an ICNN"
                    )));
                }
                if !layer.activation.is_convex_nondecreasing() {
                    return Err(Error::InvalidModel(format!(
                        "layer {i}: activation is not convex non-decreasing"
                    )));
                }
            }
            prev = width;
        }
        if self.predicts_absolute && !self.layers.last().unwrap().activation.is_nonnegative() {
            return Err(Error::InvalidModel(
                "absolute-value models need a non-negative final activation".into(),
            ));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Layer::width)
    }

    fn max_width(&self) -> usize {
        self.layers
            .iter()
            .map(Layer::width)
            .max()
            .unwrap_or(0)
            .max(self.input_dim)
    }

    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.input_dim {
            return Err(Error::dims("network input", self.input_dim, s.len()));
        }
        let mut out = vec![0.0; self.output_dim()];
        self.forward_into(s, &mut out);
        Ok(out)
    }

    /// Forward pass without dimension checks on the caller's buffers.
    pub fn forward_into(&self, s: &[f64], out: &mut [f64]) {
        let w = self.max_width();
        let mut cur = vec![0.0; w];
        let mut next = vec![0.0; w];
        let mut cur_len = match self.architecture {
            Architecture::Icnn => 0,
            Architecture::Fnn => {
                cur[..s.len()].copy_from_slice(s);
                s.len()
            }
        };
        for layer in &self.layers {
            let width = layer.width();
            let buf = &mut next[..width];
            buf.copy_from_slice(&layer.bias);
            layer.hidden_weights.accumulate_mul(&cur[..cur_len], buf);
            if let Some(ws) = &layer.input_weights {
                ws.accumulate_mul(s, buf);
            }
            for v in buf.iter_mut() {
                *v = layer.activation.apply(*v);
            }
            std::mem::swap(&mut cur, &mut next);
            cur_len = width;
        }
        out.copy_from_slice(&cur[..cur_len]);
    }

    fn forward_trace(&self, s: &[f64]) -> Trace {
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let mut a = layer.bias.clone();
            let z_in: &[f64] = match (i, self.architecture) {
                (0, Architecture::Icnn) => &[],
                (0, Architecture::Fnn) => s,
                _ => &post[i - 1],
            };
            layer.hidden_weights.accumulate_mul(z_in, &mut a);
            if let Some(ws) = &layer.input_weights {
                ws.accumulate_mul(s, &mut a);
            }
            let z: Vec<f64> = a.iter().map(|v| layer.activation.apply(*v)).collect();
            pre.push(a);
            post.push(z);
        }
        Trace { pre, post }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// All parameters in canonical order: per layer `W_z`, `W_s`, bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.hidden_weights.data);
            if let Some(ws) = &layer.input_weights {
                out.extend_from_slice(&ws.data);
            }
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| {
            l.hidden_weights
                .data
                .iter_mut()
                .chain(l.input_weights.iter_mut().flat_map(|w| w.data.iter_mut()))
                .chain(l.bias.iter_mut())
        })
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::dims("parameter vector", self.param_count(), values.len()));
        }
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
        Ok(())
    }

    /// Mean-squared error over a batch and its gradient in canonical parameter
    /// order. `inputs` and `labels` are row-major.
    pub fn loss_and_gradient(&self, inputs: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
        let p = self.output_dim();
        let rows = labels.len() / p;
        let scale = 2.0 / (rows * p) as f64;
        let mut grad = vec![0.0; self.param_count()];
        let offsets = self.param_offsets();
        let mut loss = 0.0;
        for (s, y) in inputs.chunks_exact(self.input_dim).zip(labels.chunks_exact(p)) {
            let trace = self.forward_trace(s);
            let out = trace.post.last().unwrap();
            let mut upstream: Vec<f64> = out
                .iter()
                .zip(y)
                .map(|(o, t)| {
                    loss += (o - t) * (o - t);
                    scale * (o - t)
                })
                .collect();
            for (i, layer) in self.layers.iter().enumerate().rev() {
                let delta: Vec<f64> = upstream
                    .iter()
                    .zip(&trace.pre[i])
                    .map(|(g, a)| g * layer.activation.derivative(*a))
                    .collect();
                let z_in: &[f64] = match (i, self.architecture) {
                    (0, Architecture::Icnn) => &[],
                    (0, Architecture::Fnn) => s,
                    _ => &trace.post[i - 1],
                };
                let (hw_off, ws_off, b_off) = offsets[i];
                let cols = layer.hidden_weights.cols;
                for (r, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut grad[hw_off + r * cols..hw_off + (r + 1) * cols];
                    for (g, z) in row.iter_mut().zip(z_in) {
                        *g += d * z;
                    }
                    if let Some(off) = ws_off {
                        let n = self.input_dim;
                        let row = &mut grad[off + r * n..off + (r + 1) * n];
                        for (g, x) in row.iter_mut().zip(s) {
                            *g += d * x;
                        }
                    }
                    grad[b_off + r] += d;
                }
                if i > 0 {
                    let mut next = vec![0.0; cols];
                    layer.hidden_weights.accumulate_mul_transpose(&delta, &mut next);
                    upstream = next;
                }
            }
        }
        (loss / (rows * p) as f64, grad)
    }

    /// Output at `s` and `upstreamᵀ · ∂out/∂s`. At activation kinks this is a
    /// one-sided choice, which for a convex network is still a subgradient.
    pub fn input_vjp(&self, s: &[f64], upstream: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if s.len() != self.input_dim {
            return Err(Error::dims("network input", self.input_dim, s.len()));
        }
        if upstream.len() != self.output_dim() {
            return Err(Error::dims("network upstream", self.output_dim(), upstream.len()));
        }
        let trace = self.forward_trace(s);
        let out = trace.post.last().cloned().unwrap_or_default();
        let mut grad_s = vec![0.0; self.input_dim];
        let mut up = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let delta: Vec<f64> = up
                .iter()
                .zip(&trace.pre[i])
                .map(|(g, a)| g * layer.activation.derivative(*a))
                .collect();
            if let Some(ws) = &layer.input_weights {
                ws.accumulate_mul_transpose(&delta, &mut grad_s);
            }
            let mut next = vec![0.0; layer.hidden_weights.cols];
            layer.hidden_weights.accumulate_mul_transpose(&delta, &mut next);
            if i == 0 {
                if self.architecture == Architecture::Fnn {
                    for (g, n) in grad_s.iter_mut().zip(&next) {
                        *g += n;
                    }
                }
            } else {
                up = next;
            }
        }
        Ok((out, grad_s))
    }

    fn param_offsets(&self) -> Vec<(usize, Option<usize>, usize)> {
        let mut off = 0;
        self.layers
            .iter()
            .map(|l| {
                let hw = off;
                off += l.hidden_weights.data.len();
                let ws = l.input_weights.as_ref().map(|w| {
                    let o = off;
                    off += w.data.len();
                    o
                });
                let b = off;
                off += l.bias.len();
                (hw, ws, b)
            })
            .collect()
    }

    /// Sets every negative `W_z` entry of an ICNN to zero; FNNs are untouched.
    pub fn project_nonnegative(&mut self) {
        if self.architecture != Architecture::Icnn {
            return;
        }
        for layer in &mut self.layers {
            for w in &mut layer.hidden_weights.data {
                if *w < 0.0 {
                    *w = 0.0;
                }
            }
        }
    }

    pub fn hidden_weights_nonnegative(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.hidden_weights.data.iter().all(|w| *w >= 0.0))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: Network = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

/// Free-function form of [`Network::project_nonnegative`].
pub fn project_nonnegative(mut net: Network) -> Network {
    net.project_nonnegative();
    net
}

impl Predictor for Network {
    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        Network::output_dim(self)
    }

    fn predict_into(&self, input: &[f64], out: &mut [f64]) {
        self.forward_into(input, out)
    }
}
