//! Cosine k-nearest-neighbor classification on frozen embeddings.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::mlp::MlpNetwork;
use crate::nn::tensor::{dot, l2_norm};

/// Cosine similarity, with zero-norm vectors treated as similar to nothing
/// (similarity 0). A ReLU encoder can legitimately output an all-zero
/// embedding, and a vote of 0 is the sensible score for it.
fn safe_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na <= 1e-12 || nb <= 1e-12 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Majority vote among the `k` nearest training embeddings by cosine
/// similarity. Neighbor ties (equal similarity) prefer the lower training
/// index; vote ties prefer the lowest label.
pub fn knn_eval(
    encoder: &MlpNetwork,
    train: &Dataset,
    test: &Dataset,
    k: usize,
) -> Result<f64> {
    if k == 0 || k > train.len() {
        return Err(Error::Contract(format!(
            "k = {k} must lie in 1..={}",
            train.len()
        )));
    }
    let train_emb = encoder.forward_inference(&train.samples)?;
    let test_emb = encoder.forward_inference(&test.samples)?;
    let mut correct = 0usize;
    for i in 0..test.len() {
        let e = test_emb.row(i);
        let mut sims: Vec<(f64, usize)> = (0..train.len())
            .map(|j| (safe_cosine(e, train_emb.row(j)), j))
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        let mut votes = vec![0usize; train.meta.num_classes];
        for &(_, j) in &sims[..k] {
            votes[train.labels[j]] += 1;
        }
        let mut winner = 0;
        for (label, &v) in votes.iter().enumerate().skip(1) {
            if v > votes[winner] {
                winner = label;
            }
        }
        if winner == test.labels[i] {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}
