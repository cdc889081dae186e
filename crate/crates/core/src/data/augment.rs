//! Two-tier stochastic augmentation.
//!
//! Raster samples get the usual image treatment: flips, right-angle
//! rotations, window cropping (masking at fixed resolution), and clamped
//! Gaussian jitter. Vector samples have no spatial structure, so flips map
//! to sign-flips of a random half of the coordinates and crops map to
//! coordinate masking; the contract is "two stochastic correlated views of
//! the same sample", not pixel fidelity. Jitter applies to both, unclamped
//! for vectors.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{BatchViews, SampleShape};
use crate::error::{Error, Result};
use crate::nn::tensor::Tensor;
use crate::rng::seeded;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrongAugment {
    pub hflip_p: f64,
    pub vflip_p: f64,
    /// Keep-fraction bounds for the random crop; (1.0, 1.0) disables it.
    pub crop_scale_range: (f64, f64),
    pub jitter_std: f64,
    /// Right-angle rotations to choose from uniformly, in degrees
    /// (90/180/270). Empty disables rotation. Raster-only.
    #[serde(default)]
    pub rotation_choices: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LightAugment {
    pub hflip_p: f64,
    pub center_crop_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub strong: StrongAugment,
    pub light: LightAugment,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            strong: StrongAugment {
                hflip_p: 0.5,
                vflip_p: 0.5,
                crop_scale_range: (0.6, 1.0),
                jitter_std: 0.05,
                rotation_choices: Vec::new(),
            },
            light: LightAugment {
                hflip_p: 0.5,
                center_crop_fraction: 0.9,
            },
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self, shape: &SampleShape) -> Result<()> {
        let prob = |name: &str, p: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(name, format!("probability {p} outside [0, 1]")));
            }
            Ok(())
        };
        prob("augment.strong.hflip_p", self.strong.hflip_p)?;
        prob("augment.strong.vflip_p", self.strong.vflip_p)?;
        prob("augment.light.hflip_p", self.light.hflip_p)?;
        let (lo, hi) = self.strong.crop_scale_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(Error::config(
                "augment.strong.crop_scale_range",
                format!("need 0 < lo <= hi <= 1, got ({lo}, {hi})"),
            ));
        }
        let f = self.light.center_crop_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::config(
                "augment.light.center_crop_fraction",
                format!("fraction {f} outside (0, 1]"),
            ));
        }
        if self.strong.jitter_std < 0.0 {
            return Err(Error::config("augment.strong.jitter_std", "must be non-negative"));
        }
        for &deg in &self.strong.rotation_choices {
            if !matches!(deg, 90 | 180 | 270) {
                return Err(Error::config(
                    "augment.strong.rotation_choices",
                    format!("unsupported angle {deg}, choose from 90/180/270"),
                ));
            }
        }
        match shape {
            SampleShape::Vector { .. } => {
                if !self.strong.rotation_choices.is_empty() {
                    return Err(Error::config(
                        "augment.strong.rotation_choices",
                        "rotation is a raster operation; vector data cannot be rotated",
                    ));
                }
            }
            SampleShape::Raster { height, width } => {
                let square = height == width;
                if !square
                    && self
                        .strong
                        .rotation_choices
                        .iter()
                        .any(|&d| d == 90 || d == 270)
                {
                    return Err(Error::config(
                        "augment.strong.rotation_choices",
                        format!("90/270 rotations need a square raster, got {height}x{width}"),
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentTier {
    Strong,
    Light,
    None,
}

/// Applies one augmentation tier to every row of `batch`. Fixed op order:
/// flip, rotate, crop, jitter. Fully determined by `(cfg, tier, seed)`.
pub fn augment(
    batch: &Tensor,
    cfg: &AugmentConfig,
    tier: AugmentTier,
    shape: &SampleShape,
    seed: u64,
) -> Result<Tensor> {
    cfg.validate(shape)?;
    if batch.shape().len() != 2 || batch.cols() != shape.flat_dim() {
        return Err(Error::shape(
            "augment",
            format!("[B, {}]", shape.flat_dim()),
            format!("{:?}", batch.shape()),
        ));
    }
    if tier == AugmentTier::None {
        return Ok(batch.clone());
    }
    let mut rng = seeded(seed, "augment-tier");
    let mut out = batch.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        match tier {
            AugmentTier::Strong => strong_row(row, &cfg.strong, shape, &mut rng),
            AugmentTier::Light => light_row(row, &cfg.light, shape, &mut rng),
            AugmentTier::None => unreachable!(),
        }
    }
    Ok(out)
}

fn strong_row(row: &mut [f64], cfg: &StrongAugment, shape: &SampleShape, rng: &mut ChaCha8Rng) {
    if cfg.hflip_p > 0.0 && rng.random::<f64>() < cfg.hflip_p {
        match *shape {
            SampleShape::Vector { .. } => sign_flip_half(row, rng),
            SampleShape::Raster { height, width } => hflip(row, height, width),
        }
    }
    if cfg.vflip_p > 0.0 && rng.random::<f64>() < cfg.vflip_p {
        match *shape {
            SampleShape::Vector { .. } => sign_flip_half(row, rng),
            SampleShape::Raster { height, width } => vflip(row, height, width),
        }
    }
    if let SampleShape::Raster { height, width } = *shape {
        if !cfg.rotation_choices.is_empty() {
            let deg = cfg.rotation_choices[rng.random_range(0..cfg.rotation_choices.len())];
            rotate(row, height, width, deg);
        }
    }
    let (lo, hi) = cfg.crop_scale_range;
    if hi < 1.0 || lo < 1.0 {
        let scale = if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        };
        match *shape {
            SampleShape::Vector { dim } => mask_random(row, dim, scale, rng),
            SampleShape::Raster { height, width } => {
                crop_window(row, height, width, scale, CropPlacement::Random, rng)
            }
        }
    }
    if cfg.jitter_std > 0.0 {
        let clamp = matches!(shape, SampleShape::Raster { .. });
        for v in row.iter_mut() {
            *v += cfg.jitter_std * rng.sample::<f64, _>(StandardNormal);
            if clamp {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
}

fn light_row(row: &mut [f64], cfg: &LightAugment, shape: &SampleShape, rng: &mut ChaCha8Rng) {
    if cfg.hflip_p > 0.0 && rng.random::<f64>() < cfg.hflip_p {
        match *shape {
            SampleShape::Vector { .. } => sign_flip_half(row, rng),
            SampleShape::Raster { height, width } => hflip(row, height, width),
        }
    }
    if cfg.center_crop_fraction < 1.0 {
        match *shape {
            SampleShape::Vector { dim } => mask_center(row, dim, cfg.center_crop_fraction),
            SampleShape::Raster { height, width } => crop_window(
                row,
                height,
                width,
                cfg.center_crop_fraction,
                CropPlacement::Center,
                rng,
            ),
        }
    }
}

/// Negates floor(d/2) coordinates chosen uniformly without replacement.
fn sign_flip_half(row: &mut [f64], rng: &mut ChaCha8Rng) {
    let d = row.len();
    let mut indices: Vec<usize> = (0..d).collect();
    let (chosen, _) = indices.partial_shuffle(rng, d / 2);
    for &i in chosen.iter() {
        row[i] = -row[i];
    }
}

fn hflip(row: &mut [f64], height: usize, width: usize) {
    for r in 0..height {
        row[r * width..(r + 1) * width].reverse();
    }
}

fn vflip(row: &mut [f64], height: usize, width: usize) {
    for r in 0..height / 2 {
        let opposite = height - 1 - r;
        for c in 0..width {
            row.swap(r * width + c, opposite * width + c);
        }
    }
}

fn rotate(row: &mut [f64], height: usize, width: usize, degrees: u16) {
    match degrees {
        180 => {
            row[..height * width].reverse();
        }
        // 90/270 reach here only for square rasters (validated upstream).
        90 | 270 => {
            let n = height;
            let src = row.to_vec();
            for r in 0..n {
                for c in 0..n {
                    let (sr, sc) = if degrees == 90 {
                        // 90 degrees clockwise: output (r, c) takes input (n-1-c, r).
                        (n - 1 - c, r)
                    } else {
                        (c, n - 1 - r)
                    };
                    row[r * n + c] = src[sr * n + sc];
                }
            }
        }
        _ => unreachable!("validated rotation choices"),
    }
}

/// Keeps `max(1, round(scale * d))` coordinates chosen uniformly, zeroing
/// the rest.
fn mask_random(row: &mut [f64], dim: usize, scale: f64, rng: &mut ChaCha8Rng) {
    let keep = ((scale * dim as f64).round() as usize).clamp(1, dim);
    if keep == dim {
        return;
    }
    let mut indices: Vec<usize> = (0..dim).collect();
    let (_, dropped) = indices.partial_shuffle(rng, keep);
    for &i in dropped.iter() {
        row[i] = 0.0;
    }
}

/// Keeps the central contiguous block of `max(1, round(fraction * d))`
/// coordinates, zeroing the rest.
fn mask_center(row: &mut [f64], dim: usize, fraction: f64) {
    let keep = ((fraction * dim as f64).round() as usize).clamp(1, dim);
    let start = (dim - keep) / 2;
    for (i, v) in row.iter_mut().enumerate() {
        if i < start || i >= start + keep {
            *v = 0.0;
        }
    }
}

enum CropPlacement {
    Random,
    Center,
}

/// Zeroes everything outside an `hk x wk` window (`hk = round(scale * h)`
/// etc.), placed randomly or centered. Resolution stays fixed, so this is a
/// mask rather than a crop-and-resize.
fn crop_window(
    row: &mut [f64],
    height: usize,
    width: usize,
    scale: f64,
    placement: CropPlacement,
    rng: &mut ChaCha8Rng,
) {
    let hk = ((scale * height as f64).round() as usize).clamp(1, height);
    let wk = ((scale * width as f64).round() as usize).clamp(1, width);
    if hk == height && wk == width {
        return;
    }
    let (top, left) = match placement {
        CropPlacement::Random => (
            rng.random_range(0..=height - hk),
            rng.random_range(0..=width - wk),
        ),
        CropPlacement::Center => ((height - hk) / 2, (width - wk) / 2),
    };
    for r in 0..height {
        for c in 0..width {
            if r < top || r >= top + hk || c < left || c >= left + wk {
                row[r * width + c] = 0.0;
            }
        }
    }
}

/// Builds the four per-batch views: two independent strong augmentations for
/// training, the raw batch plus a light augmentation for influence scoring.
/// Row order is preserved everywhere.
pub fn make_views(
    batch: &Tensor,
    labels: Option<Vec<usize>>,
    cfg: &AugmentConfig,
    shape: &SampleShape,
    seed: u64,
) -> Result<BatchViews> {
    if batch.shape().len() != 2 || batch.rows() == 0 {
        return Err(Error::Contract("make_views needs a nonempty 2-D batch".into()));
    }
    if let Some(l) = &labels {
        if l.len() != batch.rows() {
            return Err(Error::shape(
                "make_views",
                format!("{} labels", batch.rows()),
                format!("{}", l.len()),
            ));
        }
    }
    let view_a = augment(batch, cfg, AugmentTier::Strong, shape, derive(seed, 1))?;
    let view_b = augment(batch, cfg, AugmentTier::Strong, shape, derive(seed, 2))?;
    let tracin_view_b = augment(batch, cfg, AugmentTier::Light, shape, derive(seed, 3))?;
    Ok(BatchViews {
        view_a,
        view_b,
        tracin_view_a: batch.clone(),
        tracin_view_b,
        labels,
    })
}

fn derive(seed: u64, stream: u64) -> u64 {
    crate::rng::derive_seed(seed, &format!("view/{stream}"))
}
