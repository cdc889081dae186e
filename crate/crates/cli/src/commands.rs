//! The four subcommand bodies. Every artifact lands under `io.out_dir`,
//! and the resolved config is echoed there so any run can be reproduced
//! from its own output directory.

use std::fs;
use std::path::{Path, PathBuf};

use pairmine_core::byol::{self, ByolTowers, StepRecord, TrainObserver};
use pairmine_core::checkpoint::Checkpoint;
use pairmine_core::config::RunConfig;
use pairmine_core::data::{make_views, Dataset};
use pairmine_core::error::{Error, Result};
use pairmine_core::eval::{compare_policies, knn_eval, linear_probe};
use pairmine_core::rng::derive_seed;
use pairmine_core::select::masked_argmax;
use pairmine_core::tracin::{pairwise_tracin, tracin_inputs_from_towers};

/// Writes periodic checkpoints from inside the training loop.
struct CadenceObserver {
    out_dir: PathBuf,
    every: usize,
    steps: u64,
}

impl TrainObserver for CadenceObserver {
    fn on_step(&mut self, _record: &StepRecord) -> Result<()> {
        self.steps += 1;
        Ok(())
    }

    fn on_epoch_end(&mut self, epoch: usize, towers: &ByolTowers) -> Result<()> {
        let done = epoch + 1;
        if self.every > 0 && done % self.every == 0 {
            let path = self.out_dir.join(format!("checkpoint-epoch-{done}.json"));
            Checkpoint::from_towers(towers, self.steps)?.save(&path)?;
        }
        Ok(())
    }
}

fn prepare_out_dir(config: &RunConfig) -> Result<PathBuf> {
    let out = config.io.out_dir.clone();
    fs::create_dir_all(&out)?;
    fs::write(out.join("resolved.toml"), config.to_toml()?)?;
    Ok(out)
}

pub fn pretrain(config: &RunConfig) -> Result<()> {
    let out = prepare_out_dir(config)?;
    let dataset = config.load_dataset()?;
    let plan = config.train_plan(dataset.dim());
    let policy = config.build_policy(&plan.architecture)?;
    let mut observer = CadenceObserver {
        out_dir: out.clone(),
        every: config.io.checkpoint_every,
        steps: 0,
    };
    let (towers, log) = byol::pretrain(&plan, &dataset, policy.as_ref(), &mut observer)?;
    fs::write(out.join("metrics.csv"), log.to_csv())?;
    Checkpoint::from_towers(&towers, log.len() as u64)?.save(&out.join("checkpoint.json"))?;
    if config.io.dump_tracin {
        write_tracin_dump(&towers, &dataset, config, &out)?;
    }
    match log.records.last() {
        Some(last) => println!(
            "pretrained {} steps, final loss {:.4}, wrote {}",
            log.len(),
            last.loss_total,
            out.display()
        ),
        None => println!("0 epochs requested, wrote initial weights to {}", out.display()),
    }
    Ok(())
}

fn load_checkpoint_towers(config: &RunConfig, path: &Path, dataset: &Dataset) -> Result<ByolTowers> {
    if !path.exists() {
        return Err(Error::config(
            "checkpoint",
            format!("no such file: {}", path.display()),
        ));
    }
    let checkpoint = Checkpoint::load(path)?;
    checkpoint.expect_architecture(&config.architecture(dataset.dim()))?;
    checkpoint.to_towers()
}

pub fn eval(config: &RunConfig, checkpoint: &Path) -> Result<()> {
    let out = prepare_out_dir(config)?;
    let dataset = config.load_dataset()?;
    let towers = load_checkpoint_towers(config, checkpoint, &dataset)?;
    let (train, test) = dataset.stratified_split(
        config.dataset.test_fraction,
        derive_seed(config.seed, "eval-split"),
    )?;
    let probe = linear_probe(&towers.online_encoder, &train, &test, &config.probe_options())?;
    let knn = knn_eval(&towers.online_encoder, &train, &test, config.eval.knn_k)?;
    let detail = probe.warnings.join("; ");
    fs::write(
        out.join("eval.csv"),
        format!(
            "probe_accuracy,knn_accuracy,detail\n{},{},{}\n",
            probe.accuracy, knn, detail
        ),
    )?;
    println!("probe accuracy {:.4}, knn accuracy {:.4}", probe.accuracy, knn);
    for w in &probe.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

pub fn compare(config: &RunConfig) -> Result<()> {
    let out = prepare_out_dir(config)?;
    let dataset = config.load_dataset()?;
    let plan = config.compare_plan(dataset.dim())?;
    let report = compare_policies(&plan, &dataset)?;
    fs::write(out.join("compare_cells.csv"), report.cells_csv())?;
    fs::write(out.join("compare_summary.csv"), report.summary_csv())?;
    let table = report.text_table();
    fs::write(out.join("report.txt"), &table)?;
    print!("{table}");
    if report.any_failed() {
        let failed = report.summaries.iter().map(|s| s.failed).sum::<usize>();
        return Err(Error::State(format!(
            "{failed} comparison cells failed; see {}",
            out.join("compare_cells.csv").display()
        )));
    }
    Ok(())
}

pub fn tracin_dump(config: &RunConfig, checkpoint: &Path) -> Result<()> {
    let out = prepare_out_dir(config)?;
    let dataset = config.load_dataset()?;
    let towers = load_checkpoint_towers(config, checkpoint, &dataset)?;
    let b = config.train.batch_size;
    if dataset.len() < b {
        return Err(Error::config(
            "train.batch_size",
            format!("dataset has {} samples, fewer than one batch of {b}", dataset.len()),
        ));
    }
    write_tracin_dump(&towers, &dataset, config, &out)?;
    println!(
        "wrote influence scores for a batch of {b} to {}",
        out.display()
    );
    Ok(())
}

/// Scores the first `batch_size` rows of the dataset under `towers` and
/// writes the full matrix plus the top-k picks per anchor.
fn write_tracin_dump(
    towers: &ByolTowers,
    dataset: &Dataset,
    config: &RunConfig,
    out: &Path,
) -> Result<()> {
    let b = config.train.batch_size.min(dataset.len());
    let indices: Vec<usize> = (0..b).collect();
    let (rows, labels) = dataset.batch(&indices);
    let views = make_views(
        &rows,
        Some(labels),
        &config.augment,
        &dataset.meta.shape,
        derive_seed(config.seed, "dump"),
    )?;
    let inputs = tracin_inputs_from_towers(
        towers,
        &views.tracin_view_a,
        &views.tracin_view_b,
        config.train.base_lr,
    )?;
    let matrix = pairwise_tracin(&inputs)?;
    let mut scores = String::from("anchor,candidate,score\n");
    for i in 0..b {
        for j in 0..b {
            scores.push_str(&format!("{i},{j},{}\n", matrix.scores.get(i, j)));
        }
    }
    fs::write(out.join("tracin_matrix.csv"), scores)?;
    let k = config.train.k.min(b - 1);
    let picks = masked_argmax(&matrix.scores, k)?;
    let mut selected = String::from("anchor,rank,candidate,score\n");
    for i in 0..b {
        for (rank, &j) in picks[i * k..(i + 1) * k].iter().enumerate() {
            selected.push_str(&format!("{i},{rank},{j},{}\n", matrix.scores.get(i, j)));
        }
    }
    fs::write(out.join("tracin_selected.csv"), selected)?;
    Ok(())
}
