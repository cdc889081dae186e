//! Multi-layer perceptron: a stack of [`LinearLayer`]s with an elementwise
//! activation between them (never after the last layer).

use std::cell::Cell;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::linear::{LayerGrads, LinearLayer};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation *output* `y`, which is all
    /// the backward pass keeps around.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Static description of an MLP: input width, the width of every layer in
/// order, the hidden activation, and whether layers carry biases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topology {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub bias: bool,
}

impl Topology {
    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap_or(&self.input_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("topology.input_dim", "must be positive"));
        }
        if self.widths.is_empty() {
            return Err(Error::config("topology.widths", "must list at least one layer"));
        }
        if self.widths.contains(&0) {
            return Err(Error::config("topology.widths", "layer widths must be positive"));
        }
        Ok(())
    }
}

/// Gradients for every layer of one network, ordered input to output.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<LayerGrads>,
}

impl Gradients {
    pub fn zeros_like(net: &MlpNetwork) -> Self {
        Gradients {
            per_layer: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weight: Tensor::zeros(vec![l.n_out(), l.n_in()]),
                    bias: l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                })
                .collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        assert_eq!(self.per_layer.len(), other.per_layer.len());
        for (a, b) in self.per_layer.iter_mut().zip(&other.per_layer) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += scale * y;
            }
            if let (Some(ab), Some(bb)) = (&mut a.bias, &b.bias) {
                for (x, y) in ab.iter_mut().zip(bb) {
                    *x += scale * y;
                }
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for layer in &mut self.per_layer {
            for x in layer.weight.data_mut() {
                *x *= factor;
            }
            if let Some(b) = &mut layer.bias {
                for x in b {
                    *x *= factor;
                }
            }
        }
    }

    /// Flat inner product over every parameter. Bias terms participate here;
    /// only influence scoring excludes them, and that path never builds a
    /// [`Gradients`].
    pub fn dot(&self, other: &Gradients) -> f64 {
        assert_eq!(self.per_layer.len(), other.per_layer.len());
        let mut acc = 0.0;
        for (a, b) in self.per_layer.iter().zip(&other.per_layer) {
            for (x, y) in a.weight.data().iter().zip(b.weight.data()) {
                acc += x * y;
            }
            if let (Some(ab), Some(bb)) = (&a.bias, &b.bias) {
                for (x, y) in ab.iter().zip(bb) {
                    acc += x * y;
                }
            }
        }
        acc
    }

    pub fn is_finite(&self) -> bool {
        self.per_layer.iter().all(|l| {
            l.weight.is_finite() && l.bias.as_ref().is_none_or(|b| b.iter().all(|v| v.is_finite()))
        })
    }
}

/// The network itself. Forward/backward call counts are tracked through
/// [`Cell`]s so inference paths can stay `&self`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub layers: Vec<LinearLayer>,
    pub activation: Activation,
    #[serde(skip)]
    hidden_outputs: Vec<Tensor>,
    #[serde(skip)]
    forward_count: Cell<u64>,
    #[serde(skip)]
    backward_count: Cell<u64>,
}

impl MlpNetwork {
    pub fn init(topology: &Topology, rng: &mut ChaCha8Rng) -> Result<Self> {
        topology.validate()?;
        let mut layers = Vec::with_capacity(topology.widths.len());
        let mut n_in = topology.input_dim;
        for &n_out in &topology.widths {
            layers.push(LinearLayer::init(n_in, n_out, topology.bias, rng));
            n_in = n_out;
        }
        Ok(MlpNetwork {
            layers,
            activation: topology.activation,
            hidden_outputs: Vec::new(),
            forward_count: Cell::new(0),
            backward_count: Cell::new(0),
        })
    }

    pub fn topology(&self) -> Topology {
        Topology {
            input_dim: self.layers[0].n_in(),
            widths: self.layers.iter().map(LinearLayer::n_out).collect(),
            activation: self.activation,
            bias: self.layers[0].bias.is_some(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").n_out()
    }

    pub fn forward_count(&self) -> u64 {
        self.forward_count.get()
    }

    pub fn backward_count(&self) -> u64 {
        self.backward_count.get()
    }

    pub fn reset_counters(&self) {
        self.forward_count.set(0);
        self.backward_count.set(0);
    }

    /// Training-mode forward: caches per-layer inputs and activation outputs
    /// so a single [`MlpNetwork::backward`] can follow.
    pub fn forward(&mut self, input: &Tensor) -> Result<Tensor> {
        self.forward_count.set(self.forward_count.get() + 1);
        self.hidden_outputs.clear();
        let last = self.layers.len() - 1;
        let mut current = input.clone();
        for (idx, layer) in self.layers.iter_mut().enumerate() {
            let mut out = layer.forward(&current)?;
            if idx < last {
                for v in out.data_mut() {
                    *v = self.activation.apply(*v);
                }
                self.hidden_outputs.push(out.clone());
            }
            current = out;
        }
        Ok(current)
    }

    /// Forward pass that leaves no trace: no caches touched, works on `&self`.
    pub fn forward_inference(&self, input: &Tensor) -> Result<Tensor> {
        self.forward_count.set(self.forward_count.get() + 1);
        let last = self.layers.len() - 1;
        let mut current = input.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut out = layer.forward_inference(&current)?;
            if idx < last {
                for v in out.data_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            current = out;
        }
        Ok(current)
    }

    /// Inference forward that also returns the input reaching the final
    /// linear layer (the post-activation of the penultimate layer, or the raw
    /// input for a single-layer net).
    pub fn forward_trace(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        self.forward_count.set(self.forward_count.get() + 1);
        let last = self.layers.len() - 1;
        let mut current = input.clone();
        for (idx, layer) in self.layers.iter().take(last).enumerate() {
            let mut out = layer.forward_inference(&current)?;
            if idx < last {
                for v in out.data_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            current = out;
        }
        let final_input = current.clone();
        let output = self.layers[last].forward_inference(&current)?;
        Ok((output, final_input))
    }

    /// Back-propagates `grad_output` through the caches left by the last
    /// [`MlpNetwork::forward`], consuming them.
    ///
    /// Returns parameter gradients and the gradient with respect to the
    /// network input. Strict chain rule; any mean-over-batch factor belongs
    /// to the caller's `grad_output`.
    pub fn backward(&mut self, grad_output: &Tensor) -> Result<(Gradients, Tensor)> {
        self.backward_count.set(self.backward_count.get() + 1);
        let last = self.layers.len() - 1;
        let mut per_layer: Vec<Option<LayerGrads>> = vec![None; self.layers.len()];
        let mut grad = grad_output.clone();
        for idx in (0..self.layers.len()).rev() {
            if idx < last {
                let hidden = self.hidden_outputs.get(idx).ok_or_else(|| {
                    Error::State("MlpNetwork::backward called without a cached forward".into())
                })?;
                for (g, y) in grad.data_mut().iter_mut().zip(hidden.data()) {
                    *g *= self.activation.grad_from_output(*y);
                }
            }
            let (layer_grads, d_input) = self.layers[idx].backward(&grad)?;
            per_layer[idx] = Some(layer_grads);
            grad = d_input;
        }
        self.hidden_outputs.clear();
        Ok((
            Gradients {
                per_layer: per_layer.into_iter().map(Option::unwrap).collect(),
            },
            grad,
        ))
    }

    /// Flattens parameters layer by layer, weights before bias. The exact
    /// inverse of [`MlpNetwork::load_flat`].
    pub fn flatten_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            if let Some(b) = &layer.bias {
                out.extend_from_slice(b);
            }
        }
        out
    }

    pub fn load_flat(&mut self, params: &[f64]) -> Result<()> {
        let expected: usize = self
            .layers
            .iter()
            .map(|l| l.weight.len() + l.bias.as_ref().map_or(0, Vec::len))
            .sum();
        if params.len() != expected {
            return Err(Error::shape(
                "MlpNetwork::load_flat",
                format!("{expected} parameters"),
                format!("{}", params.len()),
            ));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weight.len();
            layer
                .weight
                .data_mut()
                .copy_from_slice(&params[offset..offset + w]);
            offset += w;
            if let Some(b) = &mut layer.bias {
                let n = b.len();
                b.copy_from_slice(&params[offset..offset + n]);
                offset += n;
            }
        }
        Ok(())
    }
}
