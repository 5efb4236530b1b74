//! Training driver: epochs over a manifest, per-epoch log and metrics,
//! best-validation checkpointing and a frozen-weight check after every epoch.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use dadf_core::data::{sample_rng, Sample};
use dadf_core::model::Dadf;
use dadf_core::optim::AdamW;
use dadf_core::{ParamStore, Role};
use serde::{Deserialize, Serialize};

use crate::checkpoint::{build_model, frozen_fingerprint, Checkpoint};
use crate::config::RunConfig;
use crate::manifest::load_dataset;
use crate::report::evaluate;

pub const LOG_FILE: &str = "train.log";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const BEST_CKPT: &str = "best.ckpt.json";
pub const LAST_CKPT: &str = "last.ckpt.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub seg: f64,
    pub rec: f64,
    pub cls: f64,
    pub overall: f64,
    pub val_pbca: f64,
    pub val_acc: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "epoch {:3} lr {:.6e} seg {:.6} rec {:.6} cls {:.6} overall {:.6} val_pbca {:.4} val_acc {:.4}",
            self.epoch, self.lr, self.seg, self.rec, self.cls, self.overall, self.val_pbca, self.val_acc
        )
    }

    /// Checkpoint selection score.
    pub fn val_score(&self) -> f64 {
        0.5 * (self.val_pbca + self.val_acc)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub initial_fingerprint: String,
    pub final_fingerprint: String,
    /// Whether any tensor of each trainable group differs from its initial value.
    pub group_changed: BTreeMap<String, bool>,
    pub model: Dadf,
}

/// For each group owning trainable tensors, whether any of them changed.
pub fn trainable_group_changes(before: &ParamStore, after: &ParamStore) -> BTreeMap<String, bool> {
    let mut out = BTreeMap::new();
    for (a, b) in before.entries().iter().zip(after.entries()) {
        if a.role != Role::Trainable {
            continue;
        }
        let changed = a
            .value
            .data()
            .iter()
            .zip(b.value.data())
            .any(|(x, y)| x.to_bits() != y.to_bits());
        *out.entry(a.group.clone()).or_insert(false) |= changed;
    }
    out
}

/// Trains from the manifests named in `config`.
pub fn train(config: &RunConfig) -> anyhow::Result<TrainOutcome> {
    let (_, train_set) = load_dataset(&config.data.train)?;
    let (_, val_set) = load_dataset(&config.data.val)?;
    train_on(config, &train_set, &val_set, &config.out_dir)
}

pub fn train_on(
    config: &RunConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    out_dir: &Path,
) -> anyhow::Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        bail!("training and validation splits must be nonempty");
    }
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("config.txt"), config.to_text())?;
    let mut model = build_model(config)?;
    let initial = model.params.clone();
    let initial_fingerprint = frozen_fingerprint(&model.params);
    let t = &config.train;
    let steps_per_epoch = train_set.len().div_ceil(t.batch_size);
    let mut opt = AdamW::new(t.optimizer.clone(), &model.params, steps_per_epoch * t.epochs)?;
    let mut rng = sample_rng(t.seed, 0);
    let indices: Vec<u64> = (0..train_set.len() as u64).collect();

    let mut log = std::fs::File::create(out_dir.join(LOG_FILE))?;
    let mut metrics = std::fs::File::create(out_dir.join(METRICS_FILE))?;
    let best_path = out_dir.join(BEST_CKPT);
    let last_path = out_dir.join(LAST_CKPT);
    let mut epochs = Vec::with_capacity(t.epochs);
    let mut best: Option<(f64, usize)> = None;
    let started = Instant::now();
    for epoch in 1..=t.epochs {
        let lr = opt.current_lr();
        let stats = model
            .train_epoch(train_set, &indices, t.batch_size, &mut opt, &mut rng)
            .with_context(|| format!("epoch {epoch}"))?;
        let fp = frozen_fingerprint(&model.params);
        if fp != initial_fingerprint {
            bail!("frozen weights changed during epoch {epoch}");
        }
        let val = evaluate(&model, val_set, t.eval_batch)?;
        let rec = EpochRecord {
            epoch,
            lr,
            seg: stats.seg,
            rec: stats.rec,
            cls: stats.cls,
            overall: stats.overall,
            val_pbca: val.overall.pbca,
            val_acc: val.overall.acc,
        };
        writeln!(log, "{}", rec.log_line())?;
        writeln!(metrics, "{}", serde_json::to_string(&rec)?)?;
        eprintln!("{}  [{:.1}s]", rec.log_line(), started.elapsed().as_secs_f64());
        if best.is_none_or(|(score, _)| rec.val_score() > score) {
            best = Some((rec.val_score(), epoch));
            Checkpoint::capture(&model, config, epoch, Some(&rng)).save(&best_path)?;
        }
        epochs.push(rec);
    }
    Checkpoint::capture(&model, config, t.epochs, Some(&rng)).save(&last_path)?;
    let final_fingerprint = frozen_fingerprint(&model.params);
    Ok(TrainOutcome {
        group_changed: trainable_group_changes(&initial, &model.params),
        epochs,
        best_epoch: best.map(|b| b.1).unwrap_or(t.epochs),
        best_checkpoint: best_path,
        last_checkpoint: last_path,
        initial_fingerprint,
        final_fingerprint,
        model,
    })
}

/// The per-epoch log as written to disk.
pub fn render_log(epochs: &[EpochRecord]) -> String {
    let mut s = String::new();
    for e in epochs {
        let _ = writeln!(s, "{}", e.log_line());
    }
    s
}
