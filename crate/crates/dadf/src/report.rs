//! Metric reports as flat key-value text and JSON.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::Context;
use dadf_core::data::Sample;
use dadf_core::metrics::{MetricsAccumulator, MetricsReport};
use dadf_core::model::Dadf;
use serde::{Deserialize, Serialize};

/// Field names, in emission order.
pub const FIELDS: [&str; 6] = ["pbca", "iinc", "acc", "auc", "eer", "trainable_fraction"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub pbca: f64,
    pub iinc: f64,
    pub acc: f64,
    /// Undefined when only one class is present.
    pub auc: Option<f64>,
    pub eer: Option<f64>,
    pub trainable_fraction: f64,
    pub samples: usize,
}

impl ReportRecord {
    pub fn new(r: &MetricsReport, samples: usize) -> Self {
        Self {
            pbca: r.pbca,
            iinc: r.iinc,
            acc: r.acc,
            auc: r.auc,
            eer: r.eer,
            trainable_fraction: r.trainable_fraction,
            samples,
        }
    }

    fn values(&self) -> [Option<f64>; 6] {
        [
            Some(self.pbca),
            Some(self.iinc),
            Some(self.acc),
            self.auc,
            self.eer,
            Some(self.trainable_fraction),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: ReportRecord,
    /// Per `domain_tag` breakdown.
    pub domains: BTreeMap<String, ReportRecord>,
}

fn fmt_value(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:?}"))
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut emit = |prefix: &str, r: &ReportRecord| {
            for (k, v) in FIELDS.iter().zip(r.values()) {
                let _ = writeln!(out, "{prefix}{k} = {}", fmt_value(v));
            }
            let _ = writeln!(out, "{prefix}samples = {}", r.samples);
        };
        emit("", &self.overall);
        for (tag, r) in &self.domains {
            emit(&format!("domain.{tag}."), r);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `<stem>.txt` and `<stem>.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join(format!("{stem}.txt")), self.to_text())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        Ok(())
    }

    pub fn summary_line(&self) -> String {
        let r = &self.overall;
        format!(
            "pbca {:.2} iinc {:.4} acc {:.2} auc {} eer {} n {}",
            r.pbca,
            r.iinc,
            r.acc,
            r.auc.map_or("undefined".into(), |v| format!("{v:.2}")),
            r.eer.map_or("undefined".into(), |v| format!("{v:.2}")),
            r.samples
        )
    }
}

/// Evaluates `samples`; sample `i` is seeded as dataset index `i`.
pub fn evaluate(model: &Dadf, samples: &[Sample], batch: usize) -> anyhow::Result<EvalReport> {
    if samples.is_empty() {
        anyhow::bail!("cannot evaluate an empty split");
    }
    let indices: Vec<u64> = (0..samples.len() as u64).collect();
    let bs = batch.max(1);
    let preds = model.predict_all(samples, &indices, bs)?;
    let mut overall = MetricsAccumulator::new();
    let mut groups: BTreeMap<String, MetricsAccumulator> = BTreeMap::new();
    for (pred, chunk) in preds.iter().zip(samples.chunks(bs)) {
        let per = pred.mask_prob.len() / chunk.len();
        for (i, s) in chunk.iter().enumerate() {
            let prob = &pred.mask_prob.data()[i * per..(i + 1) * per];
            let gt = s.mask.to_f64();
            overall.push(prob, &gt, pred.scores[i], s.label)?;
            groups
                .entry(s.domain_tag.clone())
                .or_default()
                .push(prob, &gt, pred.scores[i], s.label)?;
        }
    }
    let frac = 100.0 * model.freeze_report().fraction();
    let mut domains = BTreeMap::new();
    for (tag, acc) in groups {
        domains.insert(tag, ReportRecord::new(&acc.report(frac)?, acc.len()));
    }
    Ok(EvalReport {
        overall: ReportRecord::new(&overall.report(frac)?, samples.len()),
        domains,
    })
}
