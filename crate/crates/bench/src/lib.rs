//! Shared builders for the criterion benchmarks.

use pairmine_core::byol::{Architecture, ByolTowers};
use pairmine_core::nn::{Activation, Tensor, Topology};
use pairmine_core::rng::seeded;
use pairmine_core::tracin::TracInInputs;

/// The default desk-scale tower stack over `input_dim` features.
pub fn bench_towers(input_dim: usize, seed: u64) -> ByolTowers {
    let arch = Architecture {
        encoder: Topology {
            input_dim,
            widths: vec![128, 64],
            activation: Activation::Relu,
            bias: true,
        },
        projector: Topology {
            input_dim: 64,
            widths: vec![64, 32],
            activation: Activation::Relu,
            bias: true,
        },
        predictor: Topology {
            input_dim: 32,
            widths: vec![64, 32],
            activation: Activation::Relu,
            bias: true,
        },
    };
    let mut rng = seeded(seed, "bench");
    ByolTowers::init(&arch, &mut rng).unwrap()
}

/// A well-conditioned random batch: entries in [-1, 1), no degenerate rows.
pub fn bench_batch(b: usize, dim: usize, seed: u64) -> Tensor {
    use rand::Rng;
    let mut rng = seeded(seed, "bench-batch");
    let data = (0..b * dim)
        .map(|_| rng.random::<f64>() * 2.0 - 1.0 + 0.1)
        .collect();
    Tensor::new(vec![b, dim], data).unwrap()
}

/// Influence-score inputs of batch size `b` with `m`-dim heads and `n`-dim
/// last-layer activations.
pub fn bench_inputs(b: usize, n: usize, m: usize, seed: u64) -> TracInInputs {
    let logits_q = bench_batch(b, m, seed);
    let targets_z = bench_batch(b, m, seed ^ 1);
    let activations_a = bench_batch(b, n, seed ^ 2);
    TracInInputs::new(logits_q, targets_z, activations_a, 0.05).unwrap()
}
