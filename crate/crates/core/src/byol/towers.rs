//! The two-tower BYOL model: an online branch (encoder, projector,
//! predictor) trained by gradient descent, and a target branch (encoder,
//! projector) that only ever moves as an exponential moving average of the
//! online weights.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::mlp::{MlpNetwork, Topology};
use crate::nn::tensor::Tensor;

/// Topologies for the three online networks. The target branch reuses the
/// encoder and projector shapes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub encoder: Topology,
    pub projector: Topology,
    pub predictor: Topology,
}

impl Architecture {
    /// Checks each topology and the dimension chain
    /// encoder out -> projector in, projector out -> predictor in,
    /// predictor out == projector out (predictions live in target space).
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.projector.validate()?;
        self.predictor.validate()?;
        if self.projector.input_dim != self.encoder.output_dim() {
            return Err(Error::config(
                "architecture.projector.input_dim",
                format!(
                    "must equal encoder output {} (got {})",
                    self.encoder.output_dim(),
                    self.projector.input_dim
                ),
            ));
        }
        if self.predictor.input_dim != self.projector.output_dim() {
            return Err(Error::config(
                "architecture.predictor.input_dim",
                format!(
                    "must equal projector output {} (got {})",
                    self.projector.output_dim(),
                    self.predictor.input_dim
                ),
            ));
        }
        if self.predictor.output_dim() != self.projector.output_dim() {
            return Err(Error::config(
                "architecture.predictor.widths",
                format!(
                    "final width must equal projector output {} (got {})",
                    self.projector.output_dim(),
                    self.predictor.output_dim()
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ByolTowers {
    pub online_encoder: MlpNetwork,
    pub online_projector: MlpNetwork,
    pub online_predictor: MlpNetwork,
    pub target_encoder: MlpNetwork,
    pub target_projector: MlpNetwork,
}

impl ByolTowers {
    /// Initialises the online branch from `rng` and copies encoder and
    /// projector weights into the target branch, so both start identical.
    pub fn init(arch: &Architecture, rng: &mut ChaCha8Rng) -> Result<Self> {
        arch.validate()?;
        let online_encoder = MlpNetwork::init(&arch.encoder, rng)?;
        let online_projector = MlpNetwork::init(&arch.projector, rng)?;
        let online_predictor = MlpNetwork::init(&arch.predictor, rng)?;
        let target_encoder = online_encoder.clone();
        let target_projector = online_projector.clone();
        Ok(ByolTowers {
            online_encoder,
            online_projector,
            online_predictor,
            target_encoder,
            target_projector,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            encoder: self.online_encoder.topology(),
            projector: self.online_projector.topology(),
            predictor: self.online_predictor.topology(),
        }
    }

    /// Full online chain in inference mode: encoder -> projector -> predictor.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let h = self.online_encoder.forward_inference(input)?;
        let z = self.online_projector.forward_inference(&h)?;
        self.online_predictor.forward_inference(&z)
    }

    /// Online chain, also returning the input that reached the predictor's
    /// final linear layer.
    pub fn predict_traced(&self, input: &Tensor) -> Result<(Tensor, Tensor)> {
        let h = self.online_encoder.forward_inference(input)?;
        let z = self.online_projector.forward_inference(&h)?;
        self.online_predictor.forward_trace(&z)
    }

    /// Target chain: encoder -> projector, never through the predictor. Only
    /// inference-mode forwards exist for the target branch, so no gradient
    /// can flow into it.
    pub fn target_project(&self, input: &Tensor) -> Result<Tensor> {
        let h = self.target_encoder.forward_inference(input)?;
        self.target_projector.forward_inference(&h)
    }

    /// Online chain embeddings without the predictor, for feature-space uses.
    pub fn online_project(&self, input: &Tensor) -> Result<Tensor> {
        let h = self.online_encoder.forward_inference(input)?;
        self.online_projector.forward_inference(&h)
    }

    /// `target <- tau * target + (1 - tau) * online`, elementwise over the
    /// encoder and projector parameters. tau = 1 freezes the target, tau = 0
    /// copies the online branch outright.
    pub fn ema_update(&mut self, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::config("tau", format!("must lie in [0, 1], got {tau}")));
        }
        ema_into(&mut self.target_encoder, &self.online_encoder, tau);
        ema_into(&mut self.target_projector, &self.online_projector, tau);
        Ok(())
    }

    /// Sum of forward counters across all five networks.
    pub fn total_forward_count(&self) -> u64 {
        self.online_encoder.forward_count()
            + self.online_projector.forward_count()
            + self.online_predictor.forward_count()
            + self.target_encoder.forward_count()
            + self.target_projector.forward_count()
    }

    /// Sum of backward counters across all five networks.
    pub fn total_backward_count(&self) -> u64 {
        self.online_encoder.backward_count()
            + self.online_projector.backward_count()
            + self.online_predictor.backward_count()
            + self.target_encoder.backward_count()
            + self.target_projector.backward_count()
    }

    pub fn reset_counters(&self) {
        self.online_encoder.reset_counters();
        self.online_projector.reset_counters();
        self.online_predictor.reset_counters();
        self.target_encoder.reset_counters();
        self.target_projector.reset_counters();
    }
}

fn ema_into(target: &mut MlpNetwork, online: &MlpNetwork, tau: f64) {
    for (t_layer, o_layer) in target.layers.iter_mut().zip(&online.layers) {
        for (t, o) in t_layer
            .weight
            .data_mut()
            .iter_mut()
            .zip(o_layer.weight.data())
        {
            *t = tau * *t + (1.0 - tau) * o;
        }
        if let (Some(tb), Some(ob)) = (&mut t_layer.bias, &o_layer.bias) {
            for (t, o) in tb.iter_mut().zip(ob) {
                *t = tau * *t + (1.0 - tau) * o;
            }
        }
    }
}
