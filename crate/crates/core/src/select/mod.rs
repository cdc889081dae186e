//! Per-anchor additional-positive selection over a mini-batch.
//!
//! Every policy maps a batch to one (or `k`) partner indices per anchor,
//! self excluded. Influence-based kinds score pairs with the factorized
//! TracIn kernel; similarity kinds use cosine distance in embedding space;
//! the rest are the random and label-oracle baselines. Candidates always
//! come from the current batch only.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::byol::towers::ByolTowers;
use crate::byol::trainer::Positives;
use crate::data::BatchViews;
use crate::error::{Error, Result};
use crate::nn::tensor::{l2_norm, Tensor};
use crate::rng::seeded;
use crate::tracin::{pairwise_tracin, tracin_inputs_from_towers};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Influence scores from the model currently being trained.
    #[serde(rename = "tracin")]
    TracIn,
    /// Influence scores from a frozen reference model.
    #[serde(rename = "tracin-pretrained")]
    TracInPretrained,
    /// Cosine similarity in the current model's embedding space.
    FeatureSim,
    /// Cosine similarity in a frozen reference model's embedding space.
    FeatureSimPretrained,
    Random,
    /// Uniform choice among same-label partners; needs labels.
    SupervisedOracle,
}

impl PolicyKind {
    pub fn needs_reference(self) -> bool {
        matches!(self, PolicyKind::TracInPretrained | PolicyKind::FeatureSimPretrained)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PolicyKind::TracIn => "tracin",
            PolicyKind::TracInPretrained => "tracin-pretrained",
            PolicyKind::FeatureSim => "feature-sim",
            PolicyKind::FeatureSimPretrained => "feature-sim-pretrained",
            PolicyKind::Random => "random",
            PolicyKind::SupervisedOracle => "supervised-oracle",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which embedding the similarity kinds compare in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpace {
    #[default]
    Projector,
    Encoder,
}

#[derive(Debug, Clone)]
pub struct SelectionPolicy {
    pub kind: PolicyKind,
    reference: Option<ByolTowers>,
    pub k: usize,
    pub rng_seed: u64,
    pub feature_space: FeatureSpace,
}

impl SelectionPolicy {
    pub fn new(
        kind: PolicyKind,
        reference: Option<ByolTowers>,
        k: usize,
        rng_seed: u64,
        feature_space: FeatureSpace,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("policy.k", "must be at least 1"));
        }
        if kind.needs_reference() && reference.is_none() {
            return Err(Error::config(
                "policy.reference",
                format!("{kind} requires a reference model"),
            ));
        }
        if !kind.needs_reference() && reference.is_some() {
            return Err(Error::config(
                "policy.reference",
                format!("{kind} takes no reference model; remove it"),
            ));
        }
        Ok(SelectionPolicy {
            kind,
            reference,
            k,
            rng_seed,
            feature_space,
        })
    }

    pub fn reference(&self) -> Option<&ByolTowers> {
        self.reference.as_ref()
    }
}

/// One selection round's outcome.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub positives: Positives,
    pub score_source: PolicyKind,
    /// Fraction of selected partners sharing the anchor's label; present
    /// when the batch carries labels.
    pub tp_rate: Option<f64>,
    /// How many anchors fell back to a random partner because no same-label
    /// candidate existed (supervised oracle only).
    pub fallback_count: usize,
}

/// Runs one policy on one batch. `eta` is the learning rate the influence
/// scores are reported at (the argmax itself is invariant to any positive
/// `eta`); `salt` folds the training step into the random streams so
/// repeated calls with identical arguments reproduce identical choices.
pub fn select(
    policy: &SelectionPolicy,
    batch: &BatchViews,
    model: &ByolTowers,
    eta: f64,
    salt: u64,
) -> Result<SelectionReport> {
    let b = batch.batch_size();
    if b < 2 {
        return Err(Error::Contract(format!("selection needs a batch of at least 2, got {b}")));
    }
    if policy.k >= b {
        return Err(Error::Contract(format!(
            "k = {} must stay below the batch size {b}",
            policy.k
        )));
    }
    let mut fallback_count = 0;
    let flat: Vec<usize> = match policy.kind {
        PolicyKind::TracIn | PolicyKind::TracInPretrained => {
            let scorer = policy.reference().unwrap_or(model);
            let inputs = tracin_inputs_from_towers(
                scorer,
                &batch.tracin_view_a,
                &batch.tracin_view_b,
                eta,
            )?;
            let matrix = pairwise_tracin(&inputs)?;
            masked_argmax(&matrix.scores, policy.k)?
        }
        PolicyKind::FeatureSim | PolicyKind::FeatureSimPretrained => {
            let scorer = policy.reference().unwrap_or(model);
            let embeddings = match policy.feature_space {
                FeatureSpace::Projector => scorer.online_project(&batch.tracin_view_a)?,
                FeatureSpace::Encoder => {
                    scorer.online_encoder.forward_inference(&batch.tracin_view_a)?
                }
            };
            let scores = cosine_matrix(&embeddings)?;
            masked_argmax(&scores, policy.k)?
        }
        PolicyKind::Random => {
            let mut rng = seeded(policy.rng_seed, &format!("random/{salt}"));
            let mut flat = Vec::with_capacity(b * policy.k);
            for i in 0..b {
                let mut others: Vec<usize> = (0..b).filter(|&j| j != i).collect();
                let (chosen, _) = others.partial_shuffle(&mut rng, policy.k);
                flat.extend_from_slice(chosen);
            }
            flat
        }
        PolicyKind::SupervisedOracle => {
            let labels = batch.labels.as_ref().ok_or_else(|| {
                Error::Contract("supervised oracle needs labels in the batch".into())
            })?;
            let mut rng = seeded(policy.rng_seed, &format!("oracle/{salt}"));
            let mut flat = Vec::with_capacity(b * policy.k);
            for i in 0..b {
                let mut same: Vec<usize> = (0..b)
                    .filter(|&j| j != i && labels[j] == labels[i])
                    .collect();
                same.shuffle(&mut rng);
                same.truncate(policy.k);
                if same.len() < policy.k {
                    // Not enough same-label partners; pad with random
                    // distinct others so every anchor carries k terms.
                    fallback_count += policy.k - same.len();
                    let mut others: Vec<usize> = (0..b)
                        .filter(|&j| j != i && !same.contains(&j))
                        .collect();
                    let missing = policy.k - same.len();
                    let (extra, _) = others.partial_shuffle(&mut rng, missing);
                    same.extend_from_slice(extra);
                }
                flat.extend_from_slice(&same);
            }
            flat
        }
    };
    let positives = Positives::new(flat, b, policy.k)?;
    let tp = batch
        .labels
        .as_ref()
        .map(|labels| tp_rate(&positives, labels));
    Ok(SelectionReport {
        positives,
        score_source: policy.kind,
        tp_rate: tp,
        fallback_count,
    })
}

/// Row-wise cosine similarity matrix. Rows must have nonzero norm.
pub fn cosine_matrix(embeddings: &Tensor) -> Result<Tensor> {
    let b = embeddings.rows();
    let norms: Vec<f64> = (0..b).map(|i| l2_norm(embeddings.row(i))).collect();
    for (i, &n) in norms.iter().enumerate() {
        if n <= crate::byol::loss::NORM_FLOOR {
            return Err(Error::Numeric(format!(
                "embedding row {i} has near-zero norm; cosine similarity undefined"
            )));
        }
    }
    let mut scores = embeddings.gram();
    for i in 0..b {
        for k in 0..b {
            let v = scores.get(i, k) / (norms[i] * norms[k]);
            scores.set(i, k, v);
        }
    }
    Ok(scores)
}

/// Per row, the indices of the `k` largest off-diagonal entries, ties broken
/// toward the lowest index. Returns a flat `[B * k]` array, row-major.
pub fn masked_argmax(scores: &Tensor, k: usize) -> Result<Vec<usize>> {
    let b = scores.rows();
    if scores.shape() != [b, b] {
        return Err(Error::shape(
            "masked_argmax",
            "square score matrix".to_string(),
            format!("{:?}", scores.shape()),
        ));
    }
    if k >= b {
        return Err(Error::Contract(format!("k = {k} must stay below the batch size {b}")));
    }
    let mut flat = Vec::with_capacity(b * k);
    for i in 0..b {
        let row = scores.row(i);
        if k == 1 {
            let mut best = usize::MAX;
            let mut best_score = f64::NEG_INFINITY;
            for (j, &s) in row.iter().enumerate() {
                if j != i && s > best_score {
                    best = j;
                    best_score = s;
                }
            }
            if best == usize::MAX {
                // Every off-diagonal entry is -inf; the lowest index wins
                // by the tie rule.
                best = if i == 0 { 1 } else { 0 };
            }
            flat.push(best);
        } else {
            let mut candidates: Vec<usize> = (0..b).filter(|&j| j != i).collect();
            candidates.sort_by(|&x, &y| {
                row[y].total_cmp(&row[x]).then_with(|| x.cmp(&y))
            });
            flat.extend_from_slice(&candidates[..k]);
        }
    }
    Ok(flat)
}

/// Fraction of selections whose partner shares the anchor's label.
pub fn tp_rate(positives: &Positives, labels: &[usize]) -> f64 {
    let b = positives.batch_size();
    assert_eq!(b, labels.len(), "labels must cover the batch");
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in 0..b {
        for &j in positives.for_anchor(i) {
            if labels[j] == labels[i] {
                hits += 1;
            }
            total += 1;
        }
    }
    hits as f64 / total as f64
}
