//! Evaluation harness checks: probe against a nearest-mean oracle, kNN
//! against brute force, chance-level floors, and the comparison grid
//! end to end.

use pairmine_core::byol::{Architecture, TrainPlan};
use pairmine_core::data::{make_blobs_separated, AugmentConfig, DataMeta, Dataset, SampleShape};
use pairmine_core::eval::{
    compare_policies, knn_eval, linear_probe, sample_std, CellOutcome, ComparePlan, ProbeOptions,
    RANDOM_ENCODER_ROW, VANILLA_ROW,
};
use pairmine_core::nn::{Activation, EmaMode, MlpNetwork, Tensor, Topology};
use pairmine_core::rng::seeded;
use pairmine_core::select::{FeatureSpace, PolicyKind};
use rand::seq::SliceRandom;
use rand::Rng;

fn identity_encoder(dim: usize) -> MlpNetwork {
    let mut rng = seeded(0, "eval-id");
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

fn vector_dataset(rows: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Dataset {
    let dim = rows[0].len();
    Dataset::new(
        Tensor::from_rows(rows).unwrap(),
        labels,
        DataMeta {
            source: "eval-test".into(),
            shape: SampleShape::Vector { dim },
            num_classes,
        },
    )
    .unwrap()
}

/// Nearest-class-mean classification: the closed form a linear classifier
/// should reach on isotropic well-separated clusters.
fn nearest_mean_accuracy(train: &Dataset, test: &Dataset) -> f64 {
    let k = train.meta.num_classes;
    let d = train.dim();
    let mut means = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for i in 0..train.len() {
        counts[train.labels[i]] += 1;
        for (m, v) in means[train.labels[i]].iter_mut().zip(train.samples.row(i)) {
            *m += v;
        }
    }
    for (mean, &n) in means.iter_mut().zip(&counts) {
        assert!(n > 0, "oracle needs every class in train");
        for m in mean.iter_mut() {
            *m /= n as f64;
        }
    }
    let mut correct = 0usize;
    for i in 0..test.len() {
        let x = test.samples.row(i);
        let mut best = 0;
        let mut best_d2 = f64::INFINITY;
        for (c, mean) in means.iter().enumerate() {
            let d2: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best_d2 {
                best = c;
                best_d2 = d2;
            }
        }
        if best == test.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

#[test]
fn probe_reaches_the_nearest_mean_oracle_on_separated_blobs() {
    let data = make_blobs_separated(3, 60, 6, 0.5, 12.0, 21).unwrap();
    let (train, test) = data.stratified_split(0.3, 5).unwrap();
    let oracle = nearest_mean_accuracy(&train, &test);
    assert!(oracle >= 0.99, "blobs not separated enough: oracle {oracle}");
    let report = linear_probe(
        &identity_encoder(6),
        &train,
        &test,
        &ProbeOptions::default(),
    )
    .unwrap();
    assert!(
        report.accuracy >= oracle - 0.01,
        "probe {} vs oracle {oracle}",
        report.accuracy
    );
    assert!(report.warnings.is_empty());
}

#[test]
fn probe_on_shuffled_labels_sits_at_chance() {
    let mut data = make_blobs_separated(4, 125, 6, 0.5, 8.0, 22).unwrap();
    let mut rng = seeded(0xD0, "label-shuffle");
    data.labels.shuffle(&mut rng);
    // Small train split, large test split: 400 test points put four sigma
    // of a 0.25 coin at about 0.087.
    let (train, test) = data.stratified_split(0.8, 6).unwrap();
    let report = linear_probe(
        &identity_encoder(6),
        &train,
        &test,
        &ProbeOptions::default(),
    )
    .unwrap();
    assert!(
        (report.accuracy - 0.25).abs() < 0.09,
        "shuffled labels scored {}",
        report.accuracy
    );
}

#[test]
fn zero_epoch_probe_scores_the_constant_class_share() {
    let train = vector_dataset(
        vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.2, 0.8]],
        vec![0, 1, 1, 0],
        2,
    );
    let test = vector_dataset(
        vec![
            vec![0.1, 0.2],
            vec![0.3, 0.4],
            vec![0.5, 0.6],
            vec![0.7, 0.8],
            vec![0.9, 1.0],
        ],
        vec![0, 1, 1, 1, 0],
        2,
    );
    let opts = ProbeOptions {
        epochs: 0,
        ..ProbeOptions::default()
    };
    let report = linear_probe(&identity_encoder(2), &train, &test, &opts).unwrap();
    // Constant class-0 prediction: exactly the class-0 share of the test set.
    assert_eq!(report.accuracy, 2.0 / 5.0);
}

/// Brute-force kNN with the same tie rules: neighbor ties to the lower
/// train index, vote ties to the lowest label.
fn knn_oracle(encoder: &MlpNetwork, train: &Dataset, test: &Dataset, k: usize) -> f64 {
    let train_emb = encoder.forward_inference(&train.samples).unwrap();
    let test_emb = encoder.forward_inference(&test.samples).unwrap();
    let cosine = |a: &[f64], b: &[f64]| {
        let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        if na <= 1e-12 || nb <= 1e-12 {
            0.0
        } else {
            a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb)
        }
    };
    let mut correct = 0usize;
    for i in 0..test.len() {
        let mut remaining: Vec<usize> = (0..train.len()).collect();
        let mut votes = vec![0usize; train.meta.num_classes];
        for _ in 0..k {
            let mut best = 0;
            for (pos, &j) in remaining.iter().enumerate().skip(1) {
                let s = cosine(test_emb.row(i), train_emb.row(j));
                let cur = cosine(test_emb.row(i), train_emb.row(remaining[best]));
                if s > cur {
                    best = pos;
                }
            }
            votes[train.labels[remaining.remove(best)]] += 1;
        }
        let top = *votes.iter().max().unwrap();
        let winner = votes.iter().position(|&v| v == top).unwrap();
        if winner == test.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / test.len() as f64
}

#[test]
fn knn_matches_a_brute_force_oracle() {
    let mut rng = seeded(0xD1, "knn-oracle");
    for trial in 0..30 {
        let classes = rng.random_range(2..=3);
        let n_train = rng.random_range(classes..=12);
        let n_test = rng.random_range(1..=6);
        let d = rng.random_range(1..=4);
        // Every class appears in train so the vote vector is well-formed.
        let train_labels: Vec<usize> = (0..n_train).map(|i| i % classes).collect();
        let test_labels: Vec<usize> = (0..n_test).map(|_| rng.random_range(0..classes)).collect();
        let train_rows: Vec<Vec<f64>> = (0..n_train)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let test_rows: Vec<Vec<f64>> = (0..n_test)
            .map(|_| (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
            .collect();
        let train = vector_dataset(train_rows, train_labels, classes);
        let test = vector_dataset(test_rows, test_labels, classes);
        let encoder = MlpNetwork::init(
            &Topology {
                input_dim: d,
                widths: vec![3, 3],
                activation: Activation::Tanh,
                bias: true,
            },
            &mut seeded(trial, "knn-oracle-enc"),
        )
        .unwrap();
        let k = rng.random_range(1..=n_train);
        let got = knn_eval(&encoder, &train, &test, k).unwrap();
        let want = knn_oracle(&encoder, &train, &test, k);
        assert_eq!(got, want, "trial {trial} (n={n_train}, k={k}, d={d})");
    }
}

fn mini_compare_plan() -> ComparePlan {
    let architecture = Architecture {
        encoder: Topology {
            input_dim: 6,
            widths: vec![8, 5],
            activation: Activation::Relu,
            bias: true,
        },
        projector: Topology {
            input_dim: 5,
            widths: vec![6, 3],
            activation: Activation::Relu,
            bias: true,
        },
        predictor: Topology {
            input_dim: 3,
            widths: vec![4, 3],
            activation: Activation::Relu,
            bias: true,
        },
    };
    ComparePlan {
        base: TrainPlan {
            architecture,
            epochs: 2,
            batch_size: 8,
            base_lr: 0.05,
            warmup_epochs: 1,
            momentum: 0.9,
            weight_decay: 1e-5,
            tau_base: 0.99,
            ema_mode: EmaMode::CosineToOne,
            lambda: 1.0,
            augment: AugmentConfig::default(),
            seed: 0,
        },
        policies: vec![None, Some(PolicyKind::Random)],
        seeds: vec![1, 2, 3],
        policy_k: 1,
        feature_space: FeatureSpace::Projector,
        probe: ProbeOptions {
            epochs: 5,
            ..ProbeOptions::default()
        },
        knn_k: 3,
        test_fraction: 0.25,
    }
}

#[test]
fn comparison_grid_covers_every_cell_and_reruns_identically() {
    let data = make_blobs_separated(2, 24, 6, 0.6, 6.0, 31).unwrap();
    let plan = mini_compare_plan();
    let report = compare_policies(&plan, &data).unwrap();

    assert!(!report.any_failed());
    // 3 rows (baseline + 2 policies) x 3 seeds, policy-major.
    assert_eq!(report.cells.len(), 9);
    let labels: Vec<&str> = report.cells.iter().map(|c| c.policy.as_str()).collect();
    assert_eq!(
        labels,
        vec![
            RANDOM_ENCODER_ROW,
            RANDOM_ENCODER_ROW,
            RANDOM_ENCODER_ROW,
            VANILLA_ROW,
            VANILLA_ROW,
            VANILLA_ROW,
            "random",
            "random",
            "random"
        ]
    );
    let seeds: Vec<u64> = report.cells.iter().map(|c| c.seed).collect();
    assert_eq!(seeds, vec![1, 2, 3, 1, 2, 3, 1, 2, 3]);

    for cell in &report.cells {
        match &cell.outcome {
            CellOutcome::Ok(m) => {
                assert!((0.0..=1.0).contains(&m.probe_accuracy));
                assert!((0.0..=1.0).contains(&m.knn_accuracy));
                if cell.policy == "random" {
                    assert!(m.mean_tp_rate.is_some(), "policy rows carry a tp rate");
                    assert!(!m.tp_rate_curve.is_empty());
                } else {
                    assert!(m.mean_tp_rate.is_none());
                }
            }
            CellOutcome::Failed { message } => panic!("{}/{}: {message}", cell.policy, cell.seed),
        }
    }

    let summary = report.summary_for("random").unwrap();
    assert_eq!(summary.succeeded, 3);
    assert_eq!(summary.failed, 0);
    assert!(summary.tp_mean.is_some());
    assert!(report.summary_for(RANDOM_ENCODER_ROW).unwrap().tp_mean.is_none());

    // The whole grid reruns bit-identically from the same plan.
    let again = compare_policies(&plan, &data).unwrap();
    assert_eq!(report.cells_csv(), again.cells_csv());
    assert_eq!(report.summary_csv(), again.summary_csv());

    let table = report.text_table();
    assert!(table.contains("policy"), "{table}");
    assert!(table.contains(RANDOM_ENCODER_ROW), "{table}");
    assert!(table.contains("3 ok"), "{table}");
    let csv = report.cells_csv();
    assert_eq!(csv.lines().count(), 10);
    assert!(csv.starts_with("policy,seed,status"));
}

#[test]
fn summary_statistics_use_the_sample_convention() {
    assert_eq!(sample_std(&[0.5]), 0.0);
    let s = sample_std(&[0.2, 0.4, 0.6]);
    assert!((s - 0.2).abs() < 1e-15);
}
