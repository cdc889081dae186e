//! Multi-seed, multi-policy comparison: pretrain, probe, kNN, aggregate.

use rayon::prelude::*;

use crate::byol::towers::ByolTowers;
use crate::byol::trainer::{pretrain, NullObserver, TrainPlan};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::knn::knn_eval;
use crate::eval::probe::{linear_probe, ProbeOptions, ProbeReport};
use crate::rng::{derive_seed, seeded};
use crate::select::{FeatureSpace, PolicyKind, SelectionPolicy};

/// Label of the untrained-encoder baseline row.
pub const RANDOM_ENCODER_ROW: &str = "random-encoder";
/// Label of the plain-BYOL (no selection policy) row.
pub const VANILLA_ROW: &str = "none";

#[derive(Debug, Clone)]
pub struct ComparePlan {
    /// Template for every cell's pretraining; its `seed` is replaced by the
    /// cell seed.
    pub base: TrainPlan,
    /// `None` entries train plain BYOL; `Some(kind)` trains with that
    /// selection policy. The pretrained kinds take the same seed's vanilla
    /// model as their frozen reference.
    pub policies: Vec<Option<PolicyKind>>,
    pub seeds: Vec<u64>,
    pub policy_k: usize,
    pub feature_space: FeatureSpace,
    pub probe: ProbeOptions,
    pub knn_k: usize,
    pub test_fraction: f64,
}

impl ComparePlan {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.policies.len() < 2 {
            return Err(Error::config("compare.policies", "need at least 2 policies"));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if self.policies[..i].contains(p) {
                return Err(Error::config(
                    "compare.policies",
                    format!("duplicate policy entry {}", label_of(*p)),
                ));
            }
        }
        if self.seeds.len() < 3 {
            return Err(Error::config("compare.seeds", "need at least 3 seeds"));
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                return Err(Error::config("compare.seeds", format!("seed {s} repeats; seeds must differ")));
            }
        }
        if self.policy_k == 0 || self.policy_k >= self.base.batch_size {
            return Err(Error::config(
                "compare.policy_k",
                format!(
                    "k = {} must lie in 1..{}",
                    self.policy_k, self.base.batch_size
                ),
            ));
        }
        if self.knn_k == 0 {
            return Err(Error::config("compare.knn_k", "must be at least 1"));
        }
        if !(0.0 < self.test_fraction && self.test_fraction < 1.0) {
            return Err(Error::config("compare.test_fraction", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

pub fn label_of(policy: Option<PolicyKind>) -> String {
    policy.map_or_else(|| VANILLA_ROW.to_string(), |k| k.to_string())
}

/// Metrics of one successful (policy, seed) cell.
#[derive(Debug, Clone)]
pub struct CellMetrics {
    pub probe_accuracy: f64,
    pub knn_accuracy: f64,
    /// Mean over all training steps, when the policy reported one.
    pub mean_tp_rate: Option<f64>,
    /// Per-epoch mean tp_rate, `(epoch, rate)`.
    pub tp_rate_curve: Vec<(usize, f64)>,
    pub probe_warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub enum CellOutcome {
    Ok(CellMetrics),
    /// The failure stays in the table; nothing is silently dropped.
    Failed { message: String },
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub policy: String,
    pub seed: u64,
    pub outcome: CellOutcome,
}

/// Per-policy aggregate over the successful seeds.
#[derive(Debug, Clone)]
pub struct PolicySummary {
    pub policy: String,
    pub succeeded: usize,
    pub failed: usize,
    pub probe_mean: f64,
    pub probe_std: f64,
    pub knn_mean: f64,
    pub knn_std: f64,
    pub tp_mean: Option<f64>,
    pub tp_std: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    /// Row-major: policies in plan order (random-encoder baseline first),
    /// seeds in plan order within each policy.
    pub cells: Vec<CellResult>,
    pub summaries: Vec<PolicySummary>,
}

/// Sample standard deviation (n-1 denominator); 0 for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (values.len() - 1) as f64;
    var.sqrt()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// All models produced for one seed, reused across that seed's rows.
struct SeedRuns {
    seed: u64,
    cells: Vec<CellResult>,
}

/// Runs the full grid. Every row sees the same per-seed train/test split;
/// the vanilla model of a seed doubles as the frozen reference for the
/// `*-pretrained` policies of that seed. A failed cell is recorded and the
/// remaining grid keeps going.
pub fn compare_policies(plan: &ComparePlan, dataset: &Dataset) -> Result<CompareReport> {
    plan.validate()?;
    let seed_runs: Vec<SeedRuns> = plan
        .seeds
        .par_iter()
        .map(|&seed| run_seed(plan, dataset, seed))
        .collect::<Result<Vec<_>>>()?;

    // Regroup: policy-major, seeds in order, random-encoder baseline first.
    let mut row_labels = vec![RANDOM_ENCODER_ROW.to_string()];
    row_labels.extend(plan.policies.iter().map(|&p| label_of(p)));
    let mut cells = Vec::with_capacity(row_labels.len() * plan.seeds.len());
    for label in &row_labels {
        for runs in &seed_runs {
            let cell = runs
                .cells
                .iter()
                .find(|c| &c.policy == label)
                .unwrap_or_else(|| panic!("cell {label}/{} missing", runs.seed));
            cells.push(cell.clone());
        }
    }

    let summaries = row_labels
        .iter()
        .map(|label| summarize(label, &cells))
        .collect();
    Ok(CompareReport { cells, summaries })
}

fn run_seed(plan: &ComparePlan, dataset: &Dataset, seed: u64) -> Result<SeedRuns> {
    let (train_split, test_split) =
        dataset.stratified_split(plan.test_fraction, derive_seed(seed, "eval-split"))?;
    let mut cell_plan = plan.base.clone();
    cell_plan.seed = seed;

    // The vanilla run is always needed: it is the "none" row when requested
    // and the frozen reference for the pretrained policies.
    let vanilla = pretrain(&cell_plan, dataset, None, &mut NullObserver);

    let mut cells = Vec::new();

    // Untrained baseline: the exact initialization every run starts from.
    let random_outcome = (|| -> Result<CellMetrics> {
        let mut rng = seeded(seed, "init");
        let towers = ByolTowers::init(&plan.base.architecture, &mut rng)?;
        evaluate(&towers, &train_split, &test_split, plan, seed, None)
    })();
    cells.push(CellResult {
        policy: RANDOM_ENCODER_ROW.to_string(),
        seed,
        outcome: to_outcome(random_outcome),
    });

    for &policy in &plan.policies {
        let label = label_of(policy);
        let outcome = (|| -> Result<CellMetrics> {
            match policy {
                None => {
                    let (towers, log) = vanilla
                        .as_ref()
                        .map_err(|e| Error::State(format!("vanilla run failed: {e}")))?;
                    evaluate(towers, &train_split, &test_split, plan, seed, Some(log))
                }
                Some(kind) => {
                    let reference = if kind.needs_reference() {
                        let (towers, _) = vanilla
                            .as_ref()
                            .map_err(|e| Error::State(format!("reference run failed: {e}")))?;
                        Some(towers.clone())
                    } else {
                        None
                    };
                    let selection = SelectionPolicy::new(
                        kind,
                        reference,
                        plan.policy_k,
                        derive_seed(seed, "policy"),
                        plan.feature_space,
                    )?;
                    let (towers, log) =
                        pretrain(&cell_plan, dataset, Some(&selection), &mut NullObserver)?;
                    evaluate(&towers, &train_split, &test_split, plan, seed, Some(&log))
                }
            }
        })();
        cells.push(CellResult {
            policy: label,
            seed,
            outcome: to_outcome(outcome),
        });
    }
    Ok(SeedRuns { seed, cells })
}

fn to_outcome(result: Result<CellMetrics>) -> CellOutcome {
    match result {
        Ok(metrics) => CellOutcome::Ok(metrics),
        Err(e) => CellOutcome::Failed {
            message: e.to_string(),
        },
    }
}

fn evaluate(
    towers: &ByolTowers,
    train: &Dataset,
    test: &Dataset,
    plan: &ComparePlan,
    seed: u64,
    log: Option<&crate::byol::trainer::TrainLog>,
) -> Result<CellMetrics> {
    let mut probe_opts = plan.probe.clone();
    probe_opts.seed = derive_seed(seed, "probe");
    let ProbeReport { accuracy, warnings } =
        linear_probe(&towers.online_encoder, train, test, &probe_opts)?;
    let knn_accuracy = knn_eval(&towers.online_encoder, train, test, plan.knn_k)?;
    Ok(CellMetrics {
        probe_accuracy: accuracy,
        knn_accuracy,
        mean_tp_rate: log.and_then(|l| l.mean_tp_rate()),
        tp_rate_curve: log.map(|l| l.tp_rate_by_epoch()).unwrap_or_default(),
        probe_warnings: warnings,
    })
}

fn summarize(label: &str, cells: &[CellResult]) -> PolicySummary {
    let mine: Vec<&CellResult> = cells.iter().filter(|c| c.policy == label).collect();
    let ok: Vec<&CellMetrics> = mine
        .iter()
        .filter_map(|c| match &c.outcome {
            CellOutcome::Ok(m) => Some(m),
            CellOutcome::Failed { .. } => None,
        })
        .collect();
    let probes: Vec<f64> = ok.iter().map(|m| m.probe_accuracy).collect();
    let knns: Vec<f64> = ok.iter().map(|m| m.knn_accuracy).collect();
    let tps: Vec<f64> = ok.iter().filter_map(|m| m.mean_tp_rate).collect();
    PolicySummary {
        policy: label.to_string(),
        succeeded: ok.len(),
        failed: mine.len() - ok.len(),
        probe_mean: mean(&probes),
        probe_std: sample_std(&probes),
        knn_mean: mean(&knns),
        knn_std: sample_std(&knns),
        tp_mean: if tps.is_empty() { None } else { Some(mean(&tps)) },
        tp_std: if tps.is_empty() { None } else { Some(sample_std(&tps)) },
    }
}

impl CompareReport {
    pub fn any_failed(&self) -> bool {
        self.cells
            .iter()
            .any(|c| matches!(c.outcome, CellOutcome::Failed { .. }))
    }

    pub fn summary_for(&self, label: &str) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| s.policy == label)
    }

    /// One line per (policy, seed) cell.
    pub fn cells_csv(&self) -> String {
        let mut out =
            String::from("policy,seed,status,probe_accuracy,knn_accuracy,mean_tp_rate,detail\n");
        for c in &self.cells {
            match &c.outcome {
                CellOutcome::Ok(m) => {
                    let tp = m.mean_tp_rate.map(|v| v.to_string()).unwrap_or_default();
                    let detail = m.probe_warnings.join("; ");
                    out.push_str(&format!(
                        "{},{},ok,{},{},{},{}\n",
                        c.policy, c.seed, m.probe_accuracy, m.knn_accuracy, tp, detail
                    ));
                }
                CellOutcome::Failed { message } => {
                    out.push_str(&format!(
                        "{},{},failed,,,,{}\n",
                        c.policy,
                        c.seed,
                        message.replace([',', '\n'], ";")
                    ));
                }
            }
        }
        out
    }

    /// One line per policy with means and sample stds across seeds.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "policy,seeds_ok,seeds_failed,probe_mean,probe_std,knn_mean,knn_std,tp_mean,tp_std\n",
        );
        for s in &self.summaries {
            let tp_mean = s.tp_mean.map(|v| v.to_string()).unwrap_or_default();
            let tp_std = s.tp_std.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.policy,
                s.succeeded,
                s.failed,
                s.probe_mean,
                s.probe_std,
                s.knn_mean,
                s.knn_std,
                tp_mean,
                tp_std
            ));
        }
        out
    }

    /// Aligned-column text table of the summaries.
    pub fn text_table(&self) -> String {
        let mut rows: Vec<[String; 5]> = vec![[
            "policy".into(),
            "probe acc".into(),
            "knn acc".into(),
            "tp rate".into(),
            "cells".into(),
        ]];
        for s in &self.summaries {
            let fmt = |mean: f64, std: f64| {
                if mean.is_nan() {
                    "-".to_string()
                } else {
                    format!("{mean:.4} ± {std:.4}")
                }
            };
            let tp = match (s.tp_mean, s.tp_std) {
                (Some(m), Some(sd)) => fmt(m, sd),
                _ => "-".to_string(),
            };
            let cells = if s.failed > 0 {
                format!("{} ok, {} FAILED", s.succeeded, s.failed)
            } else {
                format!("{} ok", s.succeeded)
            };
            rows.push([
                s.policy.clone(),
                fmt(s.probe_mean, s.probe_std),
                fmt(s.knn_mean, s.knn_std),
                tp,
                cells,
            ]);
        }
        let mut widths = [0usize; 5];
        for row in &rows {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(cell, &w)| format!("{cell:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
                out.push_str(&"-".repeat(total));
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std_matches_hand_computation() {
        assert_eq!(sample_std(&[1.0]), 0.0);
        // Values 1, 2, 3: variance (1+0+1)/2 = 1.
        assert!((sample_std(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_validation_catches_degenerate_grids() {
        use crate::byol::towers::testutil::small_arch_for_dim;
        use crate::data::AugmentConfig;
        use crate::nn::schedule::EmaMode;
        let base = TrainPlan {
            architecture: small_arch_for_dim(4),
            epochs: 1,
            batch_size: 4,
            base_lr: 0.1,
            warmup_epochs: 0,
            momentum: 0.9,
            weight_decay: 0.0,
            tau_base: 0.99,
            ema_mode: EmaMode::CosineToOne,
            lambda: 1.0,
            augment: AugmentConfig::default(),
            seed: 0,
        };
        let mut plan = ComparePlan {
            base,
            policies: vec![None, Some(PolicyKind::Random)],
            seeds: vec![1, 2, 3],
            policy_k: 1,
            feature_space: FeatureSpace::Projector,
            probe: ProbeOptions::default(),
            knn_k: 5,
            test_fraction: 0.25,
        };
        assert!(plan.validate().is_ok());
        plan.seeds = vec![1, 2, 2];
        assert!(plan.validate().is_err());
        plan.seeds = vec![1, 2];
        assert!(plan.validate().is_err());
        plan.seeds = vec![1, 2, 3];
        plan.policies = vec![None];
        assert!(plan.validate().is_err());
        plan.policies = vec![None, None];
        assert!(plan.validate().is_err());
    }
}
