//! Ablation harness: component on/off grid, adapter variants and
//! reconstruction-loss data choice, each trained from the same seed and data.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::Context;
use dadf_core::adapter::AdapterVariant;
use dadf_core::data::Sample;
use dadf_core::rga::RecData;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::manifest::load_dataset;
use crate::report::{evaluate, ReportRecord};
use crate::train::train_on;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Setting {
    pub variant: AdapterSetting,
    pub rga: bool,
    pub rec_data: RecSetting,
}

/// Serialisable mirrors of the core enums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdapterSetting {
    Full,
    B,
    C,
    D,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecSetting {
    Real,
    Fake,
    Both,
}

impl From<AdapterVariant> for AdapterSetting {
    fn from(v: AdapterVariant) -> Self {
        match v {
            AdapterVariant::Full => Self::Full,
            AdapterVariant::B => Self::B,
            AdapterVariant::C => Self::C,
            AdapterVariant::D => Self::D,
            AdapterVariant::Identity => Self::Identity,
        }
    }
}

impl From<AdapterSetting> for AdapterVariant {
    fn from(v: AdapterSetting) -> Self {
        match v {
            AdapterSetting::Full => Self::Full,
            AdapterSetting::B => Self::B,
            AdapterSetting::C => Self::C,
            AdapterSetting::D => Self::D,
            AdapterSetting::Identity => Self::Identity,
        }
    }
}

impl From<RecData> for RecSetting {
    fn from(v: RecData) -> Self {
        match v {
            RecData::Real => Self::Real,
            RecData::Fake => Self::Fake,
            RecData::Both => Self::Both,
        }
    }
}

impl From<RecSetting> for RecData {
    fn from(v: RecSetting) -> Self {
        match v {
            RecSetting::Real => Self::Real,
            RecSetting::Fake => Self::Fake,
            RecSetting::Both => Self::Both,
        }
    }
}

impl Setting {
    pub fn slug(&self) -> String {
        let v: AdapterVariant = self.variant.into();
        let r: RecData = self.rec_data.into();
        if self.rga {
            format!("{}-rga-{}", v.as_str(), r.as_str())
        } else {
            format!("{}-norga", v.as_str())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub table: String,
    pub row: String,
    pub setting: Setting,
    pub metrics: ReportRecord,
}

/// `(table, row label, setting)` in table order.
pub fn planned_rows(cfg: &RunConfig) -> Vec<(String, String, Setting)> {
    let default_rec: RecSetting = RecData::Real.into();
    let mk = |variant: AdapterVariant, rga: bool, rec: RecSetting| Setting {
        variant: variant.into(),
        rga,
        rec_data: if rga { rec } else { default_rec },
    };
    let mut rows = Vec::new();
    if cfg.ablate.components {
        for (label, v, rga) in [
            ("baseline", AdapterVariant::Identity, false),
            ("+multiscale adapter", AdapterVariant::Full, false),
            ("+rga", AdapterVariant::Identity, true),
            ("+adapter +rga", AdapterVariant::Full, true),
        ] {
            rows.push(("components".into(), label.into(), mk(v, rga, default_rec)));
        }
    }
    for &v in &cfg.ablate.variants {
        rows.push((
            "variants".into(),
            format!("variant {}", v.as_str()),
            mk(v, true, default_rec),
        ));
    }
    for &r in &cfg.ablate.rec_data {
        let label = match r {
            RecData::Real => "rec on real",
            RecData::Fake => "rec on fake",
            RecData::Both => "rec on real+fake",
        };
        rows.push((
            "rec_data".into(),
            label.into(),
            mk(AdapterVariant::Full, true, r.into()),
        ));
    }
    rows
}

fn config_for(base: &RunConfig, s: &Setting) -> RunConfig {
    let mut c = base.clone();
    c.model.adapter_variant = s.variant.into();
    c.model.rga_enabled = s.rga;
    c.model.rec_data = s.rec_data.into();
    if let Some(e) = base.ablate.epochs {
        c.train.epochs = e;
    }
    c.out_dir = base.out_dir.join("runs").join(s.slug());
    c
}

/// Trains each distinct setting once and evaluates on the first test
/// manifest. Writes `ablation.md` and `ablation.json` to `out.dir`.
pub fn ablate(cfg: &RunConfig) -> anyhow::Result<Vec<AblationRow>> {
    let (_, train_set) = load_dataset(&cfg.data.train)?;
    let (_, val_set) = load_dataset(&cfg.data.val)?;
    let test_path = cfg.data.test.first().context("data.test is empty")?;
    let (_, test_set) = load_dataset(test_path)?;
    ablate_on(cfg, &train_set, &val_set, &test_set)
}

pub fn ablate_on(
    cfg: &RunConfig,
    train_set: &[Sample],
    val_set: &[Sample],
    test_set: &[Sample],
) -> anyhow::Result<Vec<AblationRow>> {
    let plan = planned_rows(cfg);
    let mut cache: BTreeMap<Setting, ReportRecord> = BTreeMap::new();
    let mut rows = Vec::with_capacity(plan.len());
    for (table, label, setting) in plan {
        if !cache.contains_key(&setting) {
            let run_cfg = config_for(cfg, &setting);
            eprintln!("ablate: training {}", setting.slug());
            let out = train_on(&run_cfg, train_set, val_set, &run_cfg.out_dir)?;
            let report = evaluate(&out.model, test_set, run_cfg.train.eval_batch)?;
            cache.insert(setting, report.overall);
        }
        rows.push(AblationRow {
            table,
            row: label,
            setting,
            metrics: cache[&setting].clone(),
        });
    }
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join("ablation.md"), render_markdown(&rows))?;
    std::fs::write(cfg.out_dir.join("ablation.json"), serde_json::to_string_pretty(&rows)?)?;
    Ok(rows)
}

pub const COLUMNS: [&str; 6] = ["table", "row", "PBCA", "IINC", "ACC", "AUC"];

pub fn render_markdown(rows: &[AblationRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {} |", COLUMNS.join(" | "));
    let _ = writeln!(s, "|{}", "---|".repeat(COLUMNS.len()));
    for r in rows {
        let m = &r.metrics;
        let _ = writeln!(
            s,
            "| {} | {} | {:.2} | {:.4} | {:.2} | {} |",
            r.table,
            r.row,
            m.pbca,
            m.iinc,
            m.acc,
            m.auc.map_or("undefined".into(), |v| format!("{v:.2}"))
        );
    }
    s
}
