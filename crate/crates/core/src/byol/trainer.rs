//! The training loop: symmetrized BYOL steps with optional mined additional
//! positives, EMA target updates, and a per-step metrics log.

use serde::{Deserialize, Serialize};

use crate::byol::loss::{byol_loss, byol_loss_grad_q};
use crate::byol::towers::{Architecture, ByolTowers};
use crate::data::{augment::make_views, AugmentConfig, BatchViews, Dataset};
use crate::error::{Error, Result};
use crate::nn::schedule::{cosine_lr, EmaMode, EmaSchedule};
use crate::nn::sgd::{SgdConfig, SgdState};
use crate::nn::tensor::Tensor;
use crate::rng::{derive_seed, seeded};
use crate::select::{select, SelectionPolicy};

/// Selected partner indices for one batch, flattened `[B * k]` row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Positives {
    flat: Vec<usize>,
    batch_size: usize,
    k: usize,
}

impl Positives {
    /// Validates shape, range, self-exclusion, and per-anchor uniqueness.
    pub fn new(flat: Vec<usize>, batch_size: usize, k: usize) -> Result<Self> {
        if k == 0 || flat.len() != batch_size * k {
            return Err(Error::Contract(format!(
                "positives need {batch_size} x {k} entries, got {}",
                flat.len()
            )));
        }
        for (pos, &j) in flat.iter().enumerate() {
            let anchor = pos / k;
            if j >= batch_size {
                return Err(Error::Contract(format!(
                    "positive index {j} out of range for batch of {batch_size}"
                )));
            }
            if j == anchor {
                return Err(Error::Contract(format!(
                    "anchor {anchor} selected itself as a positive"
                )));
            }
        }
        for anchor in 0..batch_size {
            let row = &flat[anchor * k..(anchor + 1) * k];
            for (a, &x) in row.iter().enumerate() {
                if row[..a].contains(&x) {
                    return Err(Error::Contract(format!(
                        "anchor {anchor} selected partner {x} twice"
                    )));
                }
            }
        }
        Ok(Positives {
            flat,
            batch_size,
            k,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn for_anchor(&self, i: usize) -> &[usize] {
        &self.flat[i * self.k..(i + 1) * self.k]
    }

    pub fn flat(&self) -> &[usize] {
        &self.flat
    }
}

/// Losses of one training step, averaged over the two symmetric passes.
/// `loss_total = loss_main + lambda * loss_additional`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub loss_main: f64,
    pub loss_additional: f64,
    pub loss_total: f64,
}

/// Mutable training state: the towers plus one optimizer per online network.
#[derive(Debug)]
pub struct ByolEngine {
    pub towers: ByolTowers,
    opt_encoder: SgdState,
    opt_projector: SgdState,
    opt_predictor: SgdState,
    pub lambda: f64,
}

impl ByolEngine {
    pub fn new(towers: ByolTowers, sgd: SgdConfig, lambda: f64) -> Result<Self> {
        if lambda < 0.0 {
            return Err(Error::config("train.lambda", "must be non-negative"));
        }
        let opt_encoder = SgdState::new(&towers.online_encoder, sgd);
        let opt_projector = SgdState::new(&towers.online_projector, sgd);
        let opt_predictor = SgdState::new(&towers.online_predictor, sgd);
        Ok(ByolEngine {
            towers,
            opt_encoder,
            opt_projector,
            opt_predictor,
            lambda,
        })
    }

    /// One symmetrized training step.
    ///
    /// Anchors from `view_a` regress onto target projections of `view_b` and
    /// vice versa; the two passes are averaged. With positives present, each
    /// anchor additionally regresses onto its partners' target projections
    /// from the opposite view, weighted `lambda` (averaged over `k`). The
    /// optimizer then updates the online networks, and the target branch
    /// takes one EMA step at `tau` from the fresh online weights.
    ///
    /// With `lambda == 0` the additional-positive losses are still reported
    /// when partners are given, but the gradient path is skipped entirely,
    /// so the parameter trajectory is the plain BYOL one.
    pub fn train_step(
        &mut self,
        batch: &BatchViews,
        positives: Option<&Positives>,
        lr: f64,
        tau: f64,
    ) -> Result<StepReport> {
        let b = batch.batch_size();
        if b < 2 {
            return Err(Error::Contract(format!("train_step needs a batch of at least 2, got {b}")));
        }
        if let Some(p) = positives {
            if p.batch_size() != b {
                return Err(Error::Contract(format!(
                    "positives cover a batch of {}, step has {b}",
                    p.batch_size()
                )));
            }
        }
        // Target projections of both views, constants for this step.
        let z_of_b = self.towers.target_project(&batch.view_b)?;
        let z_of_a = self.towers.target_project(&batch.view_a)?;

        let pass_a = self.pass(&batch.view_a, &z_of_b, positives)?;
        let pass_b = self.pass(&batch.view_b, &z_of_a, positives)?;

        let mut enc_grads = pass_a.encoder;
        enc_grads.add_scaled(&pass_b.encoder, 1.0);
        let mut proj_grads = pass_a.projector;
        proj_grads.add_scaled(&pass_b.projector, 1.0);
        let mut pred_grads = pass_a.predictor;
        pred_grads.add_scaled(&pass_b.predictor, 1.0);

        self.opt_encoder
            .step(&mut self.towers.online_encoder, &enc_grads, lr)?;
        self.opt_projector
            .step(&mut self.towers.online_projector, &proj_grads, lr)?;
        self.opt_predictor
            .step(&mut self.towers.online_predictor, &pred_grads, lr)?;
        self.towers.ema_update(tau)?;

        let loss_main = 0.5 * (pass_a.loss_main + pass_b.loss_main);
        let loss_additional = 0.5 * (pass_a.loss_additional + pass_b.loss_additional);
        let loss_total = if positives.is_some() {
            loss_main + self.lambda * loss_additional
        } else {
            loss_main
        };
        Ok(StepReport {
            loss_main,
            loss_additional,
            loss_total,
        })
    }

    /// One direction of the symmetric loss: anchors from `anchor_view`
    /// against constant targets `z_rows`. Returns gradients already scaled
    /// by the 0.5 symmetrization factor and the 1/B batch mean.
    fn pass(
        &mut self,
        anchor_view: &Tensor,
        z_rows: &Tensor,
        positives: Option<&Positives>,
    ) -> Result<PassResult> {
        let b = anchor_view.rows();
        let h = self.towers.online_encoder.forward(anchor_view)?;
        let z_online = self.towers.online_projector.forward(&h)?;
        let q = self.towers.online_predictor.forward(&z_online)?;

        let scale = 0.5 / b as f64;
        let mut grad_q = Tensor::zeros(q.shape().to_vec());
        let mut loss_main = 0.0;
        let mut loss_additional = 0.0;
        for i in 0..b {
            let qi = q.row(i);
            loss_main += byol_loss(qi, z_rows.row(i))?;
            let g_main = byol_loss_grad_q(qi, z_rows.row(i))?;
            let gi = grad_q.row_mut(i);
            for (g, v) in gi.iter_mut().zip(&g_main) {
                *g += scale * v;
            }
            if let Some(p) = positives {
                let k = p.k() as f64;
                let mut anchor_additional = 0.0;
                for &j in p.for_anchor(i) {
                    anchor_additional += byol_loss(qi, z_rows.row(j))?;
                }
                loss_additional += anchor_additional / k;
                if self.lambda > 0.0 {
                    let weight = scale * self.lambda / k;
                    for &j in p.for_anchor(i) {
                        let g_add = byol_loss_grad_q(qi, z_rows.row(j))?;
                        let gi = grad_q.row_mut(i);
                        for (g, v) in gi.iter_mut().zip(&g_add) {
                            *g += weight * v;
                        }
                    }
                }
            }
        }
        let (pred_grads, d_z) = self.towers.online_predictor.backward(&grad_q)?;
        let (proj_grads, d_h) = self.towers.online_projector.backward(&d_z)?;
        let (enc_grads, _) = self.towers.online_encoder.backward(&d_h)?;
        Ok(PassResult {
            encoder: enc_grads,
            projector: proj_grads,
            predictor: pred_grads,
            loss_main: loss_main / b as f64,
            loss_additional: loss_additional / b as f64,
        })
    }
}

struct PassResult {
    encoder: crate::nn::mlp::Gradients,
    projector: crate::nn::mlp::Gradients,
    predictor: crate::nn::mlp::Gradients,
    loss_main: f64,
    loss_additional: f64,
}

/// Everything a full pretraining run needs besides the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub architecture: Architecture,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub tau_base: f64,
    pub ema_mode: EmaMode,
    pub lambda: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        self.architecture.validate()?;
        if self.batch_size < 2 {
            return Err(Error::config("train.batch_size", "must be at least 2"));
        }
        if self.base_lr < 0.0 {
            return Err(Error::config("train.base_lr", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("train.momentum", "must lie in [0, 1)"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("train.weight_decay", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.tau_base) {
            return Err(Error::config("train.tau_base", "must lie in [0, 1]"));
        }
        if self.lambda < 0.0 {
            return Err(Error::config("train.lambda", "must be non-negative"));
        }
        Ok(())
    }
}

/// One row of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub loss_main: f64,
    pub loss_additional: f64,
    pub loss_total: f64,
    pub lr: f64,
    pub tau: f64,
    pub tp_rate: Option<f64>,
    pub fallback_count: usize,
}

/// Append-only per-step metrics for one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub records: Vec<StepRecord>,
}

impl TrainLog {
    pub fn push(&mut self, record: StepRecord) {
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Mean tp_rate across all steps that reported one.
    pub fn mean_tp_rate(&self) -> Option<f64> {
        let rates: Vec<f64> = self.records.iter().filter_map(|r| r.tp_rate).collect();
        if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        }
    }

    /// Mean tp_rate per epoch, ordered by epoch; epochs without tp_rate are
    /// skipped.
    pub fn tp_rate_by_epoch(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut current: Option<(usize, f64, usize)> = None;
        for r in &self.records {
            let Some(tp) = r.tp_rate else { continue };
            match &mut current {
                Some((epoch, sum, n)) if *epoch == r.epoch => {
                    *sum += tp;
                    *n += 1;
                }
                _ => {
                    if let Some((epoch, sum, n)) = current.take() {
                        out.push((epoch, sum / n as f64));
                    }
                    current = Some((r.epoch, tp, 1));
                }
            }
        }
        if let Some((epoch, sum, n)) = current {
            out.push((epoch, sum / n as f64));
        }
        out
    }

    /// Metrics CSV, one line per step. The tp_rate cell is empty for runs
    /// without labels or policy.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,step,loss_main,loss_additional,lr,tau,tp_rate\n");
        for r in &self.records {
            let tp = r.tp_rate.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.epoch, r.step, r.loss_main, r.loss_additional, r.lr, r.tau, tp
            ));
        }
        out
    }
}

/// Callbacks into the training loop; all default to no-ops.
pub trait TrainObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        Ok(())
    }

    /// Called after each epoch with the current model, e.g. for checkpoint
    /// cadence.
    fn on_epoch_end(&mut self, _epoch: usize, _towers: &ByolTowers) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Runs the full pretraining loop: shuffle, build views, (optionally) pick
/// additional positives, step, EMA. Incomplete trailing batches are dropped,
/// so every step sees exactly `batch_size` samples.
///
/// `policy = None` trains plain BYOL. Every random stream derives from
/// `plan.seed` and a stage tag, so runs are bit-reproducible.
pub fn pretrain(
    plan: &TrainPlan,
    dataset: &Dataset,
    policy: Option<&SelectionPolicy>,
    observer: &mut dyn TrainObserver,
) -> Result<(ByolTowers, TrainLog)> {
    plan.validate()?;
    if dataset.len() < plan.batch_size {
        return Err(Error::config(
            "train.batch_size",
            format!(
                "dataset has {} samples, fewer than one batch of {}",
                dataset.len(),
                plan.batch_size
            ),
        ));
    }
    if dataset.dim() != plan.architecture.encoder.input_dim {
        return Err(Error::config(
            "architecture.encoder.input_dim",
            format!(
                "encoder expects {}, dataset provides {}",
                plan.architecture.encoder.input_dim,
                dataset.dim()
            ),
        ));
    }
    if let Some(p) = policy {
        if p.k >= plan.batch_size {
            return Err(Error::config(
                "policy.k",
                format!("k = {} must stay below batch_size = {}", p.k, plan.batch_size),
            ));
        }
        if let Some(reference) = p.reference() {
            if reference.online_encoder.input_dim() != dataset.dim() {
                return Err(Error::config(
                    "policy.reference",
                    "reference model input width does not match the dataset",
                ));
            }
        }
    }

    let mut init_rng = seeded(plan.seed, "init");
    let towers = ByolTowers::init(&plan.architecture, &mut init_rng)?;
    let mut log = TrainLog::default();
    if plan.epochs == 0 {
        return Ok((towers, log));
    }

    let batches_per_epoch = dataset.len() / plan.batch_size;
    let total_steps = plan.epochs * batches_per_epoch;
    let warmup_steps = plan.warmup_epochs * batches_per_epoch;
    let ema = EmaSchedule::new(plan.tau_base, total_steps, plan.ema_mode)?;
    let mut engine = ByolEngine::new(
        towers,
        SgdConfig {
            momentum: plan.momentum,
            weight_decay: plan.weight_decay,
        },
        plan.lambda,
    )?;

    let mut step = 0usize;
    for epoch in 0..plan.epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        {
            use rand::seq::SliceRandom;
            order.shuffle(&mut seeded(plan.seed, &format!("shuffle/{epoch}")));
        }
        for batch_idx in 0..batches_per_epoch {
            let indices = &order[batch_idx * plan.batch_size..(batch_idx + 1) * plan.batch_size];
            let (rows, labels) = dataset.batch(indices);
            let views = make_views(
                &rows,
                Some(labels),
                &plan.augment,
                &dataset.meta.shape,
                derive_seed(plan.seed, &format!("augment/{epoch}/{batch_idx}")),
            )?;
            let lr = cosine_lr(step, total_steps, plan.base_lr, warmup_steps)?;
            let tau = ema.tau(step);
            let selection = match policy {
                Some(p) => Some(select(p, &views, &engine.towers, lr, step as u64)?),
                None => None,
            };
            let report = engine.train_step(
                &views,
                selection.as_ref().map(|s| &s.positives),
                lr,
                tau,
            )?;
            let record = StepRecord {
                epoch,
                step,
                loss_main: report.loss_main,
                loss_additional: report.loss_additional,
                loss_total: report.loss_total,
                lr,
                tau,
                tp_rate: selection.as_ref().and_then(|s| s.tp_rate),
                fallback_count: selection.as_ref().map_or(0, |s| s.fallback_count),
            };
            observer.on_step(&record)?;
            log.push(record);
            step += 1;
        }
        observer.on_epoch_end(epoch, &engine.towers)?;
    }
    Ok((engine.towers, log))
}
