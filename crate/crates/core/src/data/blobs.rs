//! Seeded Gaussian-blob classification data.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{DataMeta, Dataset, SampleShape};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng::seeded;

/// Default expected inter-class center distance, in units of `cluster_std`.
pub const DEFAULT_SEPARATION: f64 = 4.0;

/// Mean of the chi distribution with `d` degrees of freedom, i.e. the
/// expected norm of a standard `d`-dimensional Gaussian.
///
/// Uses `E = sqrt(2) * r(d)` with the gamma-ratio `r(d) = G((d+1)/2)/G(d/2)`
/// evaluated through the exact recurrence `r(d+1) = (d/2) / r(d)`,
/// `r(1) = 1/sqrt(pi)` — no gamma-function evaluation, no overflow.
pub fn chi_mean(d: usize) -> f64 {
    assert!(d >= 1);
    let mut r = 1.0 / std::f64::consts::PI.sqrt();
    for k in 1..d {
        r = (k as f64 / 2.0) / r;
    }
    std::f64::consts::SQRT_2 * r
}

/// Blobs with the default center separation of
/// [`DEFAULT_SEPARATION`]` * cluster_std`.
pub fn make_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    cluster_std: f64,
    seed: u64,
) -> Result<Dataset> {
    make_blobs_separated(num_classes, per_class, dim, cluster_std, DEFAULT_SEPARATION, seed)
}

/// Gaussian blobs with controlled geometry: class centers are drawn from a
/// spherical Gaussian whose scale is chosen so that the *expected* distance
/// between two centers equals `separation * cluster_std`; each sample is its
/// center plus `cluster_std`-scaled isotropic noise. Class `c` occupies rows
/// `c*per_class .. (c+1)*per_class`.
pub fn make_blobs_separated(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    cluster_std: f64,
    separation: f64,
    seed: u64,
) -> Result<Dataset> {
    if num_classes < 1 || per_class < 1 || dim < 1 {
        return Err(Error::config(
            "dataset.blobs",
            "num_classes, per_class, and dim must all be at least 1",
        ));
    }
    if cluster_std <= 0.0 {
        return Err(Error::config("dataset.cluster_std", "must be positive"));
    }
    if separation <= 0.0 {
        return Err(Error::config("dataset.separation", "must be positive"));
    }
    let mut rng = seeded(seed, "blobs");
    // If c1, c2 ~ N(0, s^2 I) independently then c1 - c2 ~ N(0, 2 s^2 I) and
    // E||c1 - c2|| = s * sqrt(2) * chi_mean(dim).
    let center_scale = separation * cluster_std / (std::f64::consts::SQRT_2 * chi_mean(dim));
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| {
            (0..dim)
                .map(|_| center_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let n = num_classes * per_class;
    let mut data = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for &c in center {
                data.push(c + cluster_std * rng.sample::<f64, _>(StandardNormal));
            }
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::new(vec![n, dim], data)?,
        labels,
        DataMeta {
            source: format!("blobs(k={num_classes}, n={per_class}, d={dim})"),
            shape: SampleShape::Vector { dim },
            num_classes,
        },
    )
}
