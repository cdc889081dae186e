//! Linear probe: a softmax classifier trained on frozen embeddings.

use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::mlp::MlpNetwork;
use crate::nn::tensor::{dot, Tensor};
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct ProbeOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            epochs: 30,
            lr: 0.5,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub warnings: Vec<String>,
}

fn param_hash(net: &MlpNetwork) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for p in net.flatten_params() {
        hasher.update(p.to_le_bytes());
    }
    hasher.finalize().into()
}

/// Trains a zero-initialized linear softmax classifier on the frozen
/// encoder's embeddings of `train` and returns accuracy on `test`.
///
/// The encoder is used in inference mode only; its parameter hash is checked
/// before and after as a guard. Classes missing from the training split are
/// recorded as warnings, not errors. Prediction ties go to the lowest class
/// index, so a zero-epoch probe predicts class 0 everywhere.
pub fn linear_probe(
    encoder: &MlpNetwork,
    train: &Dataset,
    test: &Dataset,
    opts: &ProbeOptions,
) -> Result<ProbeReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Contract("probe needs nonempty train and test sets".into()));
    }
    if train.meta.num_classes != test.meta.num_classes {
        return Err(Error::Contract(format!(
            "train has {} classes, test has {}",
            train.meta.num_classes, test.meta.num_classes
        )));
    }
    let hash_before = param_hash(encoder);
    let mut warnings = Vec::new();
    let num_classes = train.meta.num_classes;
    for class in 0..num_classes {
        if !train.labels.contains(&class) {
            warnings.push(format!("class {class} absent from probe training set"));
        }
    }

    let train_emb = encoder.forward_inference(&train.samples)?;
    let test_emb = encoder.forward_inference(&test.samples)?;
    let dim = train_emb.cols();

    let mut weights = Tensor::zeros(vec![num_classes, dim]);
    let mut bias = vec![0.0; num_classes];
    let mut rng = seeded(opts.seed, "probe");
    let n = train.len();
    for _ in 0..opts.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(opts.batch_size.max(1)) {
            let mut grad_w = Tensor::zeros(vec![num_classes, dim]);
            let mut grad_b = vec![0.0; num_classes];
            let inv = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let e = train_emb.row(i);
                let probs = softmax(&logits(&weights, &bias, e));
                for c in 0..num_classes {
                    let delta = inv * (probs[c] - f64::from(u8::from(c == train.labels[i])));
                    grad_b[c] += delta;
                    let row = grad_w.row_mut(c);
                    for (g, x) in row.iter_mut().zip(e) {
                        *g += delta * x;
                    }
                }
            }
            for (w, g) in weights.data_mut().iter_mut().zip(grad_w.data()) {
                *w -= opts.lr * g;
            }
            for (b, g) in bias.iter_mut().zip(&grad_b) {
                *b -= opts.lr * g;
            }
        }
    }

    let mut correct = 0usize;
    for i in 0..test.len() {
        let scores = logits(&weights, &bias, test_emb.row(i));
        if argmax_lowest(&scores) == test.labels[i] {
            correct += 1;
        }
    }
    if param_hash(encoder) != hash_before {
        return Err(Error::State("encoder parameters changed during probing".into()));
    }
    Ok(ProbeReport {
        accuracy: correct as f64 / test.len() as f64,
        warnings,
    })
}

fn logits(weights: &Tensor, bias: &[f64], e: &[f64]) -> Vec<f64> {
    (0..weights.rows())
        .map(|c| dot(weights.row(c), e) + bias[c])
        .collect()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Index of the largest entry; ties resolve to the lowest index.
pub(crate) fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DataMeta, SampleShape};
    use crate::nn::mlp::{Activation, Topology};

    fn identity_encoder(dim: usize) -> MlpNetwork {
        let mut rng = seeded(0, "probe-id");
        let mut net = MlpNetwork::init(
            &Topology {
                input_dim: dim,
                widths: vec![dim],
                activation: Activation::Identity,
                bias: false,
            },
            &mut rng,
        )
        .unwrap();
        let mut eye = vec![0.0; dim * dim];
        for i in 0..dim {
            eye[i * dim + i] = 1.0;
        }
        net.load_flat(&eye).unwrap();
        net
    }

    fn two_class(unbalanced: bool) -> (Dataset, Dataset) {
        // Class 0 around (-2, 0), class 1 around (2, 0).
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let n0 = if unbalanced { 12 } else { 8 };
        for i in 0..n0 {
            rows.push(vec![-2.0 + 0.01 * i as f64, 0.1 * i as f64]);
            labels.push(0);
        }
        for i in 0..8 {
            rows.push(vec![2.0 + 0.01 * i as f64, -0.1 * i as f64]);
            labels.push(1);
        }
        let meta = DataMeta {
            source: "probe-test".into(),
            shape: SampleShape::Vector { dim: 2 },
            num_classes: 2,
        };
        let all = Dataset::new(Tensor::from_rows(rows).unwrap(), labels, meta).unwrap();
        all.stratified_split(0.25, 3).unwrap()
    }

    #[test]
    fn separable_data_is_learned() {
        let (train, test) = two_class(false);
        let report = linear_probe(&identity_encoder(2), &train, &test, &ProbeOptions::default())
            .unwrap();
        assert!(report.accuracy >= 0.99, "accuracy {}", report.accuracy);
        assert!(report.warnings.is_empty());
    }

    #[test]
    fn zero_epochs_predicts_class_zero() {
        let (train, test) = two_class(true);
        let opts = ProbeOptions {
            epochs: 0,
            ..ProbeOptions::default()
        };
        let report = linear_probe(&identity_encoder(2), &train, &test, &opts).unwrap();
        let class0_share = test.labels.iter().filter(|&&l| l == 0).count() as f64
            / test.labels.len() as f64;
        assert!((report.accuracy - class0_share).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_warned_about() {
        let (mut train, test) = two_class(false);
        // Relabel every training sample to class 0.
        for l in &mut train.labels {
            *l = 0;
        }
        let report =
            linear_probe(&identity_encoder(2), &train, &test, &ProbeOptions::default()).unwrap();
        assert_eq!(report.warnings.len(), 1);
        assert!(report.warnings[0].contains("class 1"));
    }
}
