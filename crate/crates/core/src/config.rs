//! Run configuration: a single TOML file drives every command.
//!
//! Parsing rejects unknown keys so a misspelled hyperparameter fails loudly
//! instead of silently falling back to a default. Every optional seed is
//! derived from the root `seed`, so one number reproduces a whole run. After
//! [`RunConfig::resolve`] all defaults are materialized and the config can be
//! echoed back out as TOML that reproduces the run exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::byol::towers::Architecture;
use crate::byol::trainer::TrainPlan;
use crate::checkpoint::Checkpoint;
use crate::data::blobs::DEFAULT_SEPARATION;
use crate::data::{load_idx, make_blobs_separated, AugmentConfig, Dataset};
use crate::error::{Error, Result};
use crate::eval::{ComparePlan, ProbeOptions};
use crate::nn::mlp::{Activation, Topology};
use crate::nn::schedule::EmaMode;
use crate::rng::derive_seed;
use crate::select::{FeatureSpace, PolicyKind, SelectionPolicy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every stochastic stage derives its own stream from this.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub io: IoConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub compare: CompareConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Blobs,
    Idx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "d_source")]
    pub source: SourceKind,
    /// Blob geometry; ignored for `idx`.
    #[serde(default = "d_classes")]
    pub classes: usize,
    #[serde(default = "d_per_class")]
    pub per_class: usize,
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_cluster_std")]
    pub cluster_std: f64,
    #[serde(default = "d_separation")]
    pub separation: f64,
    /// IDX file pair; required for `idx`.
    #[serde(default)]
    pub images: Option<PathBuf>,
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Keep only the first N samples of an IDX file.
    #[serde(default)]
    pub limit: Option<usize>,
    #[serde(default = "d_test_fraction")]
    pub test_fraction: f64,
    /// Defaults to a stream derived from the root seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn d_source() -> SourceKind {
    SourceKind::Blobs
}
fn d_classes() -> usize {
    4
}
fn d_per_class() -> usize {
    500
}
fn d_dim() -> usize {
    32
}
fn d_cluster_std() -> f64 {
    1.0
}
fn d_separation() -> f64 {
    DEFAULT_SEPARATION
}
fn d_test_fraction() -> f64 {
    0.2
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: d_source(),
            classes: d_classes(),
            per_class: d_per_class(),
            dim: d_dim(),
            cluster_std: d_cluster_std(),
            separation: d_separation(),
            images: None,
            labels: None,
            limit: None,
            test_fraction: d_test_fraction(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Full encoder widths; the last entry is the representation dimension
    /// that the probe and kNN evaluate on.
    #[serde(default = "d_encoder_widths")]
    pub encoder_widths: Vec<usize>,
    /// Output dimension of the projector and predictor.
    #[serde(default = "d_embedding_dim")]
    pub embedding_dim: usize,
    #[serde(default = "d_head_hidden")]
    pub projector_hidden: usize,
    #[serde(default = "d_head_hidden")]
    pub predictor_hidden: usize,
    #[serde(default = "d_activation")]
    pub activation: Activation,
    #[serde(default = "d_bias")]
    pub bias: bool,
}

fn d_encoder_widths() -> Vec<usize> {
    vec![128, 64]
}
fn d_embedding_dim() -> usize {
    32
}
fn d_head_hidden() -> usize {
    64
}
fn d_activation() -> Activation {
    Activation::Relu
}
fn d_bias() -> bool {
    true
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder_widths: d_encoder_widths(),
            embedding_dim: d_embedding_dim(),
            projector_hidden: d_head_hidden(),
            predictor_hidden: d_head_hidden(),
            activation: d_activation(),
            bias: d_bias(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_base_lr")]
    pub base_lr: f64,
    #[serde(default = "d_warmup_epochs")]
    pub warmup_epochs: usize,
    #[serde(default = "d_momentum")]
    pub momentum: f64,
    #[serde(default = "d_weight_decay")]
    pub weight_decay: f64,
    #[serde(default = "d_tau_base")]
    pub tau_base: f64,
    #[serde(default = "d_ema_mode")]
    pub ema_mode: EmaMode,
    /// Weight of the additional-positive loss term.
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    /// Additional positives selected per anchor.
    #[serde(default = "d_k")]
    pub k: usize,
}

fn d_epochs() -> usize {
    30
}
fn d_batch_size() -> usize {
    64
}
fn d_base_lr() -> f64 {
    0.05
}
fn d_warmup_epochs() -> usize {
    2
}
fn d_momentum() -> f64 {
    0.9
}
fn d_weight_decay() -> f64 {
    1e-5
}
fn d_tau_base() -> f64 {
    0.99
}
fn d_ema_mode() -> EmaMode {
    EmaMode::CosineToOne
}
fn d_lambda() -> f64 {
    1.0
}
fn d_k() -> usize {
    1
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: d_epochs(),
            batch_size: d_batch_size(),
            base_lr: d_base_lr(),
            warmup_epochs: d_warmup_epochs(),
            momentum: d_momentum(),
            weight_decay: d_weight_decay(),
            tau_base: d_tau_base(),
            ema_mode: d_ema_mode(),
            lambda: d_lambda(),
            k: d_k(),
        }
    }
}

/// Selection policy plus "none" for plain training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyChoice {
    None,
    #[serde(rename = "tracin")]
    TracIn,
    #[serde(rename = "tracin-pretrained")]
    TracInPretrained,
    FeatureSim,
    FeatureSimPretrained,
    Random,
    SupervisedOracle,
}

impl PolicyChoice {
    pub fn kind(self) -> Option<PolicyKind> {
        match self {
            PolicyChoice::None => None,
            PolicyChoice::TracIn => Some(PolicyKind::TracIn),
            PolicyChoice::TracInPretrained => Some(PolicyKind::TracInPretrained),
            PolicyChoice::FeatureSim => Some(PolicyKind::FeatureSim),
            PolicyChoice::FeatureSimPretrained => Some(PolicyKind::FeatureSimPretrained),
            PolicyChoice::Random => Some(PolicyKind::Random),
            PolicyChoice::SupervisedOracle => Some(PolicyKind::SupervisedOracle),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self.kind() {
            None => "none",
            Some(k) => k.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "d_policy_kind")]
    pub kind: PolicyChoice,
    /// Checkpoint the `*-pretrained` kinds score with.
    #[serde(default)]
    pub reference: Option<PathBuf>,
    /// Defaults to a stream derived from the root seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub feature_space: FeatureSpace,
}

fn d_policy_kind() -> PolicyChoice {
    PolicyChoice::None
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            kind: d_policy_kind(),
            reference: None,
            seed: None,
            feature_space: FeatureSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default = "d_out_dir")]
    pub out_dir: PathBuf,
    /// Write a checkpoint every N epochs; 0 means final model only.
    #[serde(default)]
    pub checkpoint_every: usize,
    /// After pretraining, also dump the final model's influence matrix for
    /// one seeded batch.
    #[serde(default)]
    pub dump_tracin: bool,
}

fn d_out_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

impl Default for IoConfig {
    fn default() -> Self {
        IoConfig {
            out_dir: d_out_dir(),
            checkpoint_every: 0,
            dump_tracin: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default = "d_probe_epochs")]
    pub probe_epochs: usize,
    #[serde(default = "d_probe_lr")]
    pub probe_lr: f64,
    #[serde(default = "d_probe_batch")]
    pub probe_batch_size: usize,
    #[serde(default = "d_knn_k")]
    pub knn_k: usize,
}

fn d_probe_epochs() -> usize {
    30
}
fn d_probe_lr() -> f64 {
    0.5
}
fn d_probe_batch() -> usize {
    32
}
fn d_knn_k() -> usize {
    5
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            probe_epochs: d_probe_epochs(),
            probe_lr: d_probe_lr(),
            probe_batch_size: d_probe_batch(),
            knn_k: d_knn_k(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "d_compare_policies")]
    pub policies: Vec<PolicyChoice>,
    /// Empty = five seeds derived from the root seed.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

fn d_compare_policies() -> Vec<PolicyChoice> {
    vec![
        PolicyChoice::None,
        PolicyChoice::Random,
        PolicyChoice::FeatureSim,
        PolicyChoice::TracInPretrained,
        PolicyChoice::SupervisedOracle,
    ]
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            policies: d_compare_policies(),
            seeds: Vec::new(),
        }
    }
}

pub const DEFAULT_COMPARE_SEEDS: usize = 5;

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Fills in every seed that was left to derivation, so the echoed config
    /// is fully explicit. Must run after any root-seed override.
    pub fn resolve(&mut self) {
        if self.dataset.seed.is_none() {
            self.dataset.seed = Some(derive_seed(self.seed, "dataset"));
        }
        if self.policy.seed.is_none() {
            self.policy.seed = Some(derive_seed(self.seed, "policy"));
        }
        if self.compare.seeds.is_empty() {
            self.compare.seeds = (0..DEFAULT_COMPARE_SEEDS)
                .map(|i| derive_seed(self.seed, &format!("compare/{i}")))
                .collect();
        }
    }

    /// Serializes the config as TOML. Resolve first if the output is meant
    /// to reproduce the run.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match d.source {
            SourceKind::Blobs => {
                if d.classes < 1 || d.per_class < 1 || d.dim < 1 {
                    return Err(Error::config(
                        "dataset",
                        "classes, per_class, and dim must all be at least 1",
                    ));
                }
                if d.cluster_std <= 0.0 || !d.cluster_std.is_finite() {
                    return Err(Error::config("dataset.cluster_std", "must be positive"));
                }
                if d.separation < 0.0 || !d.separation.is_finite() {
                    return Err(Error::config("dataset.separation", "must be non-negative"));
                }
                if d.images.is_some() || d.labels.is_some() {
                    return Err(Error::config(
                        "dataset.images",
                        "blobs source takes no IDX paths",
                    ));
                }
            }
            SourceKind::Idx => {
                let images = d
                    .images
                    .as_ref()
                    .ok_or_else(|| Error::config("dataset.images", "required for idx source"))?;
                let labels = d
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::config("dataset.labels", "required for idx source"))?;
                for (field, path) in [("dataset.images", images), ("dataset.labels", labels)] {
                    if !path.is_file() {
                        return Err(Error::config(
                            field,
                            format!("{} does not exist", path.display()),
                        ));
                    }
                }
                if d.limit == Some(0) {
                    return Err(Error::config("dataset.limit", "must be at least 1"));
                }
            }
        }
        if !(0.0 < d.test_fraction && d.test_fraction < 1.0) {
            return Err(Error::config("dataset.test_fraction", "must lie in (0, 1)"));
        }

        let m = &self.model;
        if m.encoder_widths.is_empty() || m.encoder_widths.contains(&0) {
            return Err(Error::config(
                "model.encoder_widths",
                "need at least one nonzero width",
            ));
        }
        if m.embedding_dim == 0 || m.projector_hidden == 0 || m.predictor_hidden == 0 {
            return Err(Error::config("model", "all dimensions must be at least 1"));
        }

        let t = &self.train;
        if t.batch_size < 2 {
            return Err(Error::config("train.batch_size", "must be at least 2"));
        }
        if !(t.base_lr.is_finite() && t.base_lr >= 0.0) {
            return Err(Error::config("train.base_lr", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&t.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        if !(t.weight_decay.is_finite() && t.weight_decay >= 0.0) {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&t.tau_base) {
            return Err(Error::config("train.tau_base", "must lie in [0, 1]"));
        }
        if !(t.lambda.is_finite() && t.lambda >= 0.0) {
            return Err(Error::config("train.lambda", "must be non-negative"));
        }
        if t.k < 1 || t.k >= t.batch_size {
            return Err(Error::config(
                "train.k",
                format!("must lie in 1..{} (batch_size - 1)", t.batch_size),
            ));
        }

        let p = &self.policy;
        let needs_ref = p
            .kind
            .kind()
            .map(PolicyKind::needs_reference)
            .unwrap_or(false);
        if needs_ref {
            let reference = p.reference.as_ref().ok_or_else(|| {
                Error::config(
                    "policy.reference",
                    format!("{} requires a reference checkpoint", p.kind.as_str()),
                )
            })?;
            if !reference.is_file() {
                return Err(Error::config(
                    "policy.reference",
                    format!("{} does not exist", reference.display()),
                ));
            }
        } else if p.reference.is_some() {
            return Err(Error::config(
                "policy.reference",
                format!("{} takes no reference checkpoint", p.kind.as_str()),
            ));
        }

        let e = &self.eval;
        if !(e.probe_lr.is_finite() && e.probe_lr >= 0.0) {
            return Err(Error::config("eval.probe_lr", "must be non-negative"));
        }
        if e.probe_batch_size == 0 {
            return Err(Error::config("eval.probe_batch_size", "must be at least 1"));
        }
        if e.knn_k == 0 {
            return Err(Error::config("eval.knn_k", "must be at least 1"));
        }

        let c = &self.compare;
        if c.policies.len() < 2 {
            return Err(Error::config(
                "compare.policies",
                "need at least 2 policies",
            ));
        }
        for (i, choice) in c.policies.iter().enumerate() {
            if c.policies[..i].contains(choice) {
                return Err(Error::config(
                    "compare.policies",
                    format!("duplicate entry {}", choice.as_str()),
                ));
            }
        }
        if !c.seeds.is_empty() {
            if c.seeds.len() < 3 {
                return Err(Error::config("compare.seeds", "need at least 3 seeds"));
            }
            for (i, s) in c.seeds.iter().enumerate() {
                if c.seeds[..i].contains(s) {
                    return Err(Error::config(
                        "compare.seeds",
                        format!("seed {s} repeats; seeds must differ"),
                    ));
                }
            }
        }

        // Shape-dependent checks (augment vs raster/vector, dimension chain)
        // run against the loaded dataset in the builder methods.
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let seed = self
            .dataset
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, "dataset"));
        match self.dataset.source {
            SourceKind::Blobs => make_blobs_separated(
                self.dataset.classes,
                self.dataset.per_class,
                self.dataset.dim,
                self.dataset.cluster_std,
                self.dataset.separation,
                seed,
            ),
            SourceKind::Idx => {
                let images = self
                    .dataset
                    .images
                    .as_ref()
                    .ok_or_else(|| Error::config("dataset.images", "required for idx source"))?;
                let labels = self
                    .dataset
                    .labels
                    .as_ref()
                    .ok_or_else(|| Error::config("dataset.labels", "required for idx source"))?;
                let full = load_idx(images, labels)?;
                match self.dataset.limit {
                    None => Ok(full),
                    Some(n) => full.take(n),
                }
            }
        }
    }

    pub fn architecture(&self, input_dim: usize) -> Architecture {
        let m = &self.model;
        let encoder_out = *m.encoder_widths.last().expect("validated non-empty");
        Architecture {
            encoder: Topology {
                input_dim,
                widths: m.encoder_widths.clone(),
                activation: m.activation,
                bias: m.bias,
            },
            projector: Topology {
                input_dim: encoder_out,
                widths: vec![m.projector_hidden, m.embedding_dim],
                activation: m.activation,
                bias: m.bias,
            },
            predictor: Topology {
                input_dim: m.embedding_dim,
                widths: vec![m.predictor_hidden, m.embedding_dim],
                activation: m.activation,
                bias: m.bias,
            },
        }
    }

    pub fn train_plan(&self, input_dim: usize) -> TrainPlan {
        let t = &self.train;
        TrainPlan {
            architecture: self.architecture(input_dim),
            epochs: t.epochs,
            batch_size: t.batch_size,
            base_lr: t.base_lr,
            warmup_epochs: t.warmup_epochs,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            tau_base: t.tau_base,
            ema_mode: t.ema_mode,
            lambda: t.lambda,
            augment: self.augment.clone(),
            seed: self.seed,
        }
    }

    /// Builds the configured selection policy, loading and checking the
    /// reference checkpoint when the kind needs one. `None` means plain
    /// training.
    pub fn build_policy(&self, arch: &Architecture) -> Result<Option<SelectionPolicy>> {
        let Some(kind) = self.policy.kind.kind() else {
            return Ok(None);
        };
        let reference = if kind.needs_reference() {
            let path = self.policy.reference.as_ref().ok_or_else(|| {
                Error::config(
                    "policy.reference",
                    format!("{kind} requires a reference checkpoint"),
                )
            })?;
            let ckpt = Checkpoint::load(path)?;
            ckpt.expect_architecture(arch)?;
            Some(ckpt.to_towers()?)
        } else {
            None
        };
        let seed = self
            .policy
            .seed
            .unwrap_or_else(|| derive_seed(self.seed, "policy"));
        Ok(Some(SelectionPolicy::new(
            kind,
            reference,
            self.train.k,
            seed,
            self.policy.feature_space,
        )?))
    }

    pub fn probe_options(&self) -> ProbeOptions {
        ProbeOptions {
            epochs: self.eval.probe_epochs,
            lr: self.eval.probe_lr,
            batch_size: self.eval.probe_batch_size,
            seed: derive_seed(self.seed, "probe"),
        }
    }

    pub fn compare_plan(&self, input_dim: usize) -> Result<ComparePlan> {
        let mut seeds = self.compare.seeds.clone();
        if seeds.is_empty() {
            seeds = (0..DEFAULT_COMPARE_SEEDS)
                .map(|i| derive_seed(self.seed, &format!("compare/{i}")))
                .collect();
        }
        let plan = ComparePlan {
            base: self.train_plan(input_dim),
            policies: self.compare.policies.iter().map(|c| c.kind()).collect(),
            seeds,
            policy_k: self.train.k,
            feature_space: self.policy.feature_space,
            probe: self.probe_options(),
            knn_k: self.eval.knn_k,
            test_fraction: self.dataset.test_fraction,
        };
        plan.validate()?;
        Ok(plan)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_valid_and_fully_defaulted() {
        let mut cfg = RunConfig::parse("").unwrap();
        cfg.resolve();
        cfg.validate().unwrap();
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.dataset.classes, 4);
        assert!(cfg.dataset.seed.is_some());
        assert_eq!(cfg.compare.seeds.len(), 5);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let err = RunConfig::parse("[train]\nbatchsize = 8\n").unwrap_err();
        assert!(err.is_config());
        assert!(err.to_string().contains("batchsize"));
        assert!(RunConfig::parse("learning_rate = 0.1\n").is_err());
    }

    #[test]
    fn resolved_echo_reparses_identically() {
        let mut cfg = RunConfig::parse("seed = 9\n[train]\nepochs = 3\n").unwrap();
        cfg.resolve();
        let echo = cfg.to_toml().unwrap();
        let mut again = RunConfig::parse(&echo).unwrap();
        again.resolve();
        assert_eq!(cfg, again);
        assert_eq!(echo, again.to_toml().unwrap());
    }

    #[test]
    fn validation_names_the_offending_field() {
        let mut cfg = RunConfig::parse("[train]\nbatch_size = 1\n").unwrap();
        cfg.resolve();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("train.batch_size"), "{err}");

        let mut cfg = RunConfig::parse("[train]\nk = 64\n").unwrap();
        cfg.resolve();
        assert!(cfg.validate().unwrap_err().to_string().contains("train.k"));

        let mut cfg =
            RunConfig::parse("[policy]\nkind = \"tracin-pretrained\"\n").unwrap();
        cfg.resolve();
        let err = cfg.validate().unwrap_err();
        assert!(err.to_string().contains("policy.reference"), "{err}");
    }

    #[test]
    fn policy_strings_match_report_labels() {
        let cfg = RunConfig::parse("[policy]\nkind = \"feature-sim\"\n").unwrap();
        assert_eq!(cfg.policy.kind, PolicyChoice::FeatureSim);
        assert_eq!(cfg.policy.kind.as_str(), "feature-sim");
        let cfg = RunConfig::parse("[policy]\nkind = \"tracin\"\n").unwrap();
        assert_eq!(cfg.policy.kind.as_str(), "tracin");
    }

    #[test]
    fn seed_derivations_follow_root_overrides() {
        let mut a = RunConfig::parse("seed = 1\n").unwrap();
        let mut b = RunConfig::parse("seed = 1\n").unwrap();
        b.seed = 2;
        a.resolve();
        b.resolve();
        assert_ne!(a.dataset.seed, b.dataset.seed);
        // An explicit dataset seed survives a root override.
        let mut c = RunConfig::parse("seed = 1\n[dataset]\nseed = 77\n").unwrap();
        c.seed = 2;
        c.resolve();
        assert_eq!(c.dataset.seed, Some(77));
    }

    #[test]
    fn blobs_config_builds_matching_plan() {
        let mut cfg = RunConfig::parse(
            "seed = 5\n[dataset]\nclasses = 2\nper_class = 8\ndim = 6\n[train]\nepochs = 1\nbatch_size = 4\n",
        )
        .unwrap();
        cfg.resolve();
        cfg.validate().unwrap();
        let data = cfg.load_dataset().unwrap();
        assert_eq!(data.len(), 16);
        assert_eq!(data.dim(), 6);
        let plan = cfg.train_plan(data.dim());
        plan.validate().unwrap();
        assert_eq!(plan.architecture.encoder.input_dim, 6);
        assert_eq!(
            plan.architecture.predictor.output_dim(),
            cfg.model.embedding_dim
        );
    }
}
