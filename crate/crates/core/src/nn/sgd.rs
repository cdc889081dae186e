//! SGD with classical momentum and decoupled-from-nothing weight decay: the
//! decay term is added straight into the gradient before the momentum buffer
//! update, mirroring the common `torch.optim.SGD` behaviour.

use crate::error::{Error, Result};
use crate::nn::mlp::{Gradients, MlpNetwork};
use crate::nn::tensor::Tensor;

#[derive(Debug, Clone, Copy)]
pub struct SgdConfig {
    pub momentum: f64,
    pub weight_decay: f64,
}

/// One velocity buffer per parameter tensor, shape-aligned with the network.
#[derive(Debug, Clone)]
pub struct SgdState {
    velocity: Vec<(Tensor, Option<Vec<f64>>)>,
    pub config: SgdConfig,
}

impl SgdState {
    pub fn new(net: &MlpNetwork, config: SgdConfig) -> Self {
        SgdState {
            velocity: net
                .layers
                .iter()
                .map(|l| {
                    (
                        Tensor::zeros(vec![l.n_out(), l.n_in()]),
                        l.bias.as_ref().map(|b| vec![0.0; b.len()]),
                    )
                })
                .collect(),
            config,
        }
    }

    /// Update rule, per parameter `p` with gradient `g` and velocity `v`:
    ///
    /// ```text
    /// v <- momentum * v + g + weight_decay * p
    /// p <- p - lr * v
    /// ```
    ///
    /// `lr = 0` is legal and leaves parameters untouched while still rolling
    /// the velocity forward. Negative learning rates are rejected.
    pub fn step(&mut self, net: &mut MlpNetwork, grads: &Gradients, lr: f64) -> Result<()> {
        if lr < 0.0 {
            return Err(Error::config("lr", "learning rate must be non-negative"));
        }
        if !grads.is_finite() {
            return Err(Error::Numeric(
                "non-finite gradient reached the optimiser".into(),
            ));
        }
        if grads.per_layer.len() != self.velocity.len() {
            return Err(Error::shape(
                "SgdState::step",
                format!("{} layers", self.velocity.len()),
                format!("{}", grads.per_layer.len()),
            ));
        }
        let SgdConfig {
            momentum,
            weight_decay,
        } = self.config;
        for ((layer, grad), (vel_w, vel_b)) in net
            .layers
            .iter_mut()
            .zip(&grads.per_layer)
            .zip(&mut self.velocity)
        {
            for ((p, g), v) in layer
                .weight
                .data_mut()
                .iter_mut()
                .zip(grad.weight.data())
                .zip(vel_w.data_mut())
            {
                *v = momentum * *v + g + weight_decay * *p;
                *p -= lr * *v;
            }
            if let (Some(bias), Some(gb), Some(vb)) = (&mut layer.bias, &grad.bias, vel_b) {
                for ((p, g), v) in bias.iter_mut().zip(gb).zip(vb.iter_mut()) {
                    *v = momentum * *v + g + weight_decay * *p;
                    *p -= lr * *v;
                }
            }
        }
        Ok(())
    }
}
