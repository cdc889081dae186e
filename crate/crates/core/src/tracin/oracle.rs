//! Slow, obviously-correct influence references.
//!
//! The factorized kernel makes two approximations worth checking end to end:
//! restricting to the last linear layer, and the first-order Taylor step from
//! actual loss reduction to a gradient inner product. The oracles here do
//! neither — they train for real and measure real loss changes — so tests can
//! quantify both gaps instead of trusting them.

use crate::byol::loss::{byol_loss, byol_loss_grad_q};
use crate::byol::towers::ByolTowers;
use crate::error::Result;
use crate::nn::mlp::Gradients;
use crate::nn::sgd::{SgdConfig, SgdState};
use crate::nn::tensor::Tensor;

/// BYOL loss of a single sample: online chain against the sample's own
/// target projection, no augmentation.
pub fn single_sample_loss(towers: &ByolTowers, x: &[f64]) -> Result<f64> {
    let input = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let q = towers.predict(&input)?;
    let z = towers.target_project(&input)?;
    byol_loss(q.row(0), z.row(0))
}

/// Gradients of [`single_sample_loss`] with respect to every online
/// parameter (encoder, projector, predictor — biases included), via full
/// backpropagation. The target branch stays constant.
pub fn full_loss_gradients(
    towers: &mut ByolTowers,
    x: &[f64],
) -> Result<(Gradients, Gradients, Gradients)> {
    let input = Tensor::new(vec![1, x.len()], x.to_vec())?;
    let h = towers.online_encoder.forward(&input)?;
    let z_online = towers.online_projector.forward(&h)?;
    let q = towers.online_predictor.forward(&z_online)?;
    let z_target = towers.target_project(&input)?;
    let grad_q = byol_loss_grad_q(q.row(0), z_target.row(0))?;
    let grad_q = Tensor::new(vec![1, grad_q.len()], grad_q)?;
    let (pred_grads, d_z) = towers.online_predictor.backward(&grad_q)?;
    let (proj_grads, d_h) = towers.online_projector.backward(&d_z)?;
    let (enc_grads, _) = towers.online_encoder.backward(&d_h)?;
    Ok((enc_grads, proj_grads, pred_grads))
}

/// Inner product of the full-model loss gradients of two samples — the
/// quantity the one-step influence approximation multiplies by the learning
/// rate.
pub fn full_gradient_dot(towers: &mut ByolTowers, x_i: &[f64], x_k: &[f64]) -> Result<f64> {
    let (enc_i, proj_i, pred_i) = full_loss_gradients(towers, x_i)?;
    let (enc_k, proj_k, pred_k) = full_loss_gradients(towers, x_k)?;
    Ok(enc_i.dot(&enc_k) + proj_i.dot(&proj_k) + pred_i.dot(&pred_k))
}

/// The idealized influence of `x_i` on `x_k`: clone the model, run `steps`
/// plain SGD steps on `x_i` alone (constant `lr`, no momentum, no weight
/// decay, target branch frozen), and return the accumulated reduction in
/// `x_k`'s loss:
///
/// ```text
/// sum_t  l(w_t, x_k) - l(w_{t+1}, x_k)
/// ```
pub fn idealized_tracin(
    towers_init: &ByolTowers,
    x_i: &[f64],
    x_k: &[f64],
    steps: usize,
    lr: f64,
) -> Result<f64> {
    let mut towers = towers_init.clone();
    let plain = SgdConfig {
        momentum: 0.0,
        weight_decay: 0.0,
    };
    let mut opt_enc = SgdState::new(&towers.online_encoder, plain);
    let mut opt_proj = SgdState::new(&towers.online_projector, plain);
    let mut opt_pred = SgdState::new(&towers.online_predictor, plain);
    let mut total = 0.0;
    for _ in 0..steps {
        let before = single_sample_loss(&towers, x_k)?;
        let (enc_g, proj_g, pred_g) = full_loss_gradients(&mut towers, x_i)?;
        opt_enc.step(&mut towers.online_encoder, &enc_g, lr)?;
        opt_proj.step(&mut towers.online_projector, &proj_g, lr)?;
        opt_pred.step(&mut towers.online_predictor, &pred_g, lr)?;
        let after = single_sample_loss(&towers, x_k)?;
        total += before - after;
    }
    Ok(total)
}
