//! Closed-form pairwise influence over a mini-batch.
//!
//! For the BYOL loss the gradient with respect to the predictor logits has a
//! closed form ([`grad_logits`]), and the last linear layer's per-sample
//! weight gradient is the rank-one matrix `grad_logits(q_i, z_i) * a_i^T`
//! where `a_i` is that layer's input. The Frobenius inner product of two
//! rank-one matrices factorizes, `<u a^T, v b^T>_F = (u.v)(a.b)`, so the
//! whole BxB influence matrix costs two Gram matrices and an elementwise
//! product: one forward pass, zero backward passes, no per-sample gradient
//! materialization.

pub mod oracle;

use crate::byol::loss::{byol_loss_grad_q, NORM_FLOOR};
use crate::byol::towers::ByolTowers;
use crate::error::{Error, Result};
use crate::nn::tensor::{l2_norm, Tensor};

/// Everything the kernel needs about one batch: predictor outputs `q`,
/// target projections `z` (constants), last-layer inputs `a`, and the
/// learning rate `eta` at this iteration.
#[derive(Debug, Clone)]
pub struct TracInInputs {
    pub logits_q: Tensor,
    pub targets_z: Tensor,
    pub activations_a: Tensor,
    pub eta: f64,
}

impl TracInInputs {
    pub fn new(logits_q: Tensor, targets_z: Tensor, activations_a: Tensor, eta: f64) -> Result<Self> {
        let b = logits_q.rows();
        if b < 2 {
            return Err(Error::Contract(format!(
                "influence needs a batch of at least 2, got {b}"
            )));
        }
        if targets_z.shape() != logits_q.shape() {
            return Err(Error::shape(
                "TracInInputs",
                format!("targets_z {:?}", logits_q.shape()),
                format!("{:?}", targets_z.shape()),
            ));
        }
        if activations_a.shape().len() != 2 || activations_a.rows() != b {
            return Err(Error::shape(
                "TracInInputs",
                format!("activations_a [{b}, m]"),
                format!("{:?}", activations_a.shape()),
            ));
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::Numeric(format!("eta must be finite and >= 0, got {eta}")));
        }
        for i in 0..b {
            if l2_norm(logits_q.row(i)) <= NORM_FLOOR {
                return Err(Error::Numeric(format!("logits_q row {i} has near-zero norm")));
            }
            if l2_norm(targets_z.row(i)) <= NORM_FLOOR {
                return Err(Error::Numeric(format!("targets_z row {i} has near-zero norm")));
            }
        }
        Ok(TracInInputs {
            logits_q,
            targets_z,
            activations_a,
            eta,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.logits_q.rows()
    }
}

/// Pairwise influence scores for one batch.
#[derive(Debug, Clone)]
pub struct TracInMatrix {
    pub scores: Tensor,
    pub eta: f64,
    pub self_masked: bool,
}

impl TracInMatrix {
    /// Replaces the diagonal with `-inf` so self-influence can never win an
    /// argmax. Idempotent.
    pub fn mask_self(&mut self) {
        let b = self.scores.rows();
        for i in 0..b {
            self.scores.set(i, i, f64::NEG_INFINITY);
        }
        self.self_masked = true;
    }
}

/// Gradient of the BYOL loss with respect to the logits:
///
/// ```text
/// grad_q f = 2 * ( <q,z> * q / (||q||^3 ||z||)  -  z / (||q|| ||z||) )
/// ```
///
/// Delegates to the loss module's analytic gradient; this is the same
/// formula spelled from the influence side of the fence.
pub fn grad_logits(q: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    byol_loss_grad_q(q, z)
}

/// The full per-sample last-layer weight gradient `grad_logits(q_i, z_i) *
/// a_i^T` as an `[n, m]` matrix. Diagnostics and oracle tests only; the
/// production path never materializes these.
pub fn per_sample_last_layer_grad(inputs: &TracInInputs, i: usize) -> Result<Tensor> {
    let b = inputs.batch_size();
    if i >= b {
        return Err(Error::Contract(format!("sample index {i} out of range 0..{b}")));
    }
    let g = grad_logits(inputs.logits_q.row(i), inputs.targets_z.row(i))?;
    let a = inputs.activations_a.row(i);
    let mut out = Tensor::zeros(vec![g.len(), a.len()]);
    for (r, gr) in g.iter().enumerate() {
        let row = out.row_mut(r);
        for (c, ac) in a.iter().enumerate() {
            row[c] = gr * ac;
        }
    }
    Ok(out)
}

/// The factorized pairwise influence matrix:
///
/// ```text
/// scores[i][k] = eta * (grad_q f(q_i) . grad_q f(q_k)) * (a_i . a_k)
/// ```
///
/// built from two Gram matrices multiplied elementwise. Never touches
/// network weights and performs zero backward passes.
pub fn pairwise_tracin(inputs: &TracInInputs) -> Result<TracInMatrix> {
    let b = inputs.batch_size();
    let n = inputs.logits_q.cols();
    let mut grads = Tensor::zeros(vec![b, n]);
    for i in 0..b {
        let g = grad_logits(inputs.logits_q.row(i), inputs.targets_z.row(i))?;
        grads.row_mut(i).copy_from_slice(&g);
    }
    let grad_gram = grads.gram();
    let act_gram = inputs.activations_a.gram();
    let mut scores = Tensor::zeros(vec![b, b]);
    for i in 0..b {
        for k in 0..b {
            scores.set(i, k, inputs.eta * grad_gram.get(i, k) * act_gram.get(i, k));
        }
    }
    Ok(TracInMatrix {
        scores,
        eta: inputs.eta,
        self_masked: false,
    })
}

/// Assembles [`TracInInputs`] by running the scoring model once per view:
/// `q` and `a` from the online chain on the unaugmented view, `z` from the
/// target chain on the lightly augmented view. Exactly one forward pass per
/// view, no backward passes, usable through `&ByolTowers`.
pub fn tracin_inputs_from_towers(
    model: &ByolTowers,
    tracin_view_a: &Tensor,
    tracin_view_b: &Tensor,
    eta: f64,
) -> Result<TracInInputs> {
    let (logits_q, activations_a) = model.predict_traced(tracin_view_a)?;
    let targets_z = model.target_project(tracin_view_b)?;
    TracInInputs::new(logits_q, targets_z, activations_a, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::dot;

    fn simple_inputs(eta: f64) -> TracInInputs {
        TracInInputs::new(
            Tensor::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            Tensor::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, -1.0]]).unwrap(),
            Tensor::from_rows(vec![vec![3.0, 1.0], vec![1.0, 2.0], vec![0.5, 0.5]]).unwrap(),
            eta,
        )
        .unwrap()
    }

    #[test]
    fn grad_logits_hand_case() {
        // q=(1,0), z=(0,1): <q,z>=0, norms 1, so grad = -2 z = (0, -2).
        let g = grad_logits(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(g[0].abs() < 1e-12);
        assert!((g[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn grad_logits_vanishes_at_alignment() {
        let g = grad_logits(&[0.6, 0.8], &[0.6, 0.8]).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn outer_product_hand_case() {
        // grad=(0,-2), a=(3,1) -> [[0,0],[-6,-2]].
        let inputs = TracInInputs::new(
            Tensor::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
            Tensor::from_rows(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            Tensor::from_rows(vec![vec![3.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            0.1,
        )
        .unwrap();
        let g = per_sample_last_layer_grad(&inputs, 0).unwrap();
        assert_eq!(g.row(0), &[0.0, 0.0]);
        assert_eq!(g.row(1), &[-6.0, -2.0]);
        assert!(per_sample_last_layer_grad(&inputs, 2).is_err());
    }

    #[test]
    fn zero_grad_gives_zero_matrix_row() {
        let inputs = TracInInputs::new(
            Tensor::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            Tensor::from_rows(vec![vec![2.0, 0.0], vec![1.0, 0.0]]).unwrap(),
            Tensor::from_rows(vec![vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(),
            1.0,
        )
        .unwrap();
        // Sample 0 is perfectly aligned with its target: zero gradient.
        let g = per_sample_last_layer_grad(&inputs, 0).unwrap();
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn eta_zero_zeroes_everything() {
        let m = pairwise_tracin(&simple_inputs(0.0)).unwrap();
        assert!(m.scores.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_sample_scores_equal_self_influence() {
        let q = vec![vec![1.0, 0.2], vec![1.0, 0.2], vec![-0.5, 1.0]];
        let z = vec![vec![0.1, 1.0], vec![0.1, 1.0], vec![1.0, 0.3]];
        let a = vec![vec![2.0, -1.0], vec![2.0, -1.0], vec![0.4, 0.4]];
        let inputs = TracInInputs::new(
            Tensor::from_rows(q).unwrap(),
            Tensor::from_rows(z).unwrap(),
            Tensor::from_rows(a).unwrap(),
            0.5,
        )
        .unwrap();
        let m = pairwise_tracin(&inputs).unwrap();
        assert_eq!(m.scores.get(0, 1).to_bits(), m.scores.get(0, 0).to_bits());
        assert!(m.scores.get(0, 0) >= 0.0);
    }

    #[test]
    fn diagonal_is_eta_times_squared_norms() {
        let inputs = simple_inputs(0.7);
        let m = pairwise_tracin(&inputs).unwrap();
        for i in 0..inputs.batch_size() {
            let g = grad_logits(inputs.logits_q.row(i), inputs.targets_z.row(i)).unwrap();
            let expected = 0.7 * dot(&g, &g) * dot(inputs.activations_a.row(i), inputs.activations_a.row(i));
            assert!((m.scores.get(i, i) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            assert!(m.scores.get(i, i) >= 0.0);
        }
    }

    #[test]
    fn mask_self_floors_the_diagonal() {
        let mut m = pairwise_tracin(&simple_inputs(1.0)).unwrap();
        assert!(!m.self_masked);
        m.mask_self();
        assert!(m.self_masked);
        for i in 0..3 {
            assert_eq!(m.scores.get(i, i), f64::NEG_INFINITY);
        }
    }

    #[test]
    fn degenerate_rows_name_the_sample() {
        let err = TracInInputs::new(
            Tensor::from_rows(vec![vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap(),
            Tensor::from_rows(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap(),
            Tensor::from_rows(vec![vec![1.0], vec![1.0]]).unwrap(),
            0.1,
        )
        .unwrap_err();
        match err {
            Error::Numeric(msg) => assert!(msg.contains("row 1"), "message: {msg}"),
            other => panic!("expected numeric error, got {other:?}"),
        }
    }

    #[test]
    fn batch_of_one_is_rejected() {
        let one = Tensor::from_rows(vec![vec![1.0, 0.0]]).unwrap();
        assert!(TracInInputs::new(one.clone(), one.clone(), one, 0.1).is_err());
    }
}
