//! Checkpoint files.
//!
//! A training checkpoint is JSON holding every trainable tensor and buffer,
//! a SHA-256 fingerprint of the frozen tensors, the full config text, the
//! epoch and the training generator state. Frozen weights are not stored;
//! they are rebuilt from the config (or its backbone file) and checked
//! against the fingerprint.
//!
//! A backbone file is JSON of the form
//! `{"format": "dadf-backbone", "version": 1, "tensors": {name: {"group", "shape", "data"}}}`
//! with one entry per frozen tensor, data flattened row-major.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context};
use dadf_core::model::Dadf;
use dadf_core::{ParamStore, Role, Tensor};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const CHECKPOINT_FORMAT: &str = "dadf-checkpoint";
pub const BACKBONE_FORMAT: &str = "dadf-backbone";
pub const VERSION: u32 = 1;

/// Hex SHA-256 over the names, shapes and bit patterns of all frozen tensors.
pub fn frozen_fingerprint(ps: &ParamStore) -> String {
    let mut h = Sha256::new();
    for e in ps.entries().iter().filter(|e| e.role == Role::Frozen) {
        h.update(e.name.as_bytes());
        h.update([0u8]);
        for &d in e.value.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for v in e.value.data() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub group: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    /// `u128` word position as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> anyhow::Result<ChaCha8Rng> {
        use rand_chacha::rand_core::SeedableRng;
        if self.seed.len() != 64 {
            bail!("rng seed must be 32 hex bytes");
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse()?);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: String,
    pub epoch: usize,
    pub steps: usize,
    pub frozen_fingerprint: String,
    pub rng: Option<RngState>,
    /// Trainable tensors and buffers by name.
    pub tensors: BTreeMap<String, TensorRecord>,
}

impl Checkpoint {
    pub fn capture(model: &Dadf, config: &RunConfig, epoch: usize, rng: Option<&ChaCha8Rng>) -> Self {
        let tensors = model
            .params
            .entries()
            .iter()
            .filter(|e| e.role != Role::Frozen)
            .map(|e| {
                (
                    e.name.clone(),
                    TensorRecord {
                        group: e.group.clone(),
                        shape: e.value.shape().to_vec(),
                        data: e.value.data().to_vec(),
                    },
                )
            })
            .collect();
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: VERSION,
            config: config.to_text(),
            epoch,
            steps: model.steps_taken(),
            frozen_fingerprint: frozen_fingerprint(&model.params),
            rng: rng.map(RngState::capture),
            tensors,
        }
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let ck: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != VERSION {
            bail!("{}: not a version {VERSION} {CHECKPOINT_FORMAT} file", path.display());
        }
        Ok(ck)
    }

    pub fn run_config(&self) -> anyhow::Result<RunConfig> {
        Ok(RunConfig::parse_text(&self.config)?)
    }

    /// Rebuilds the model and restores every stored tensor.
    pub fn restore(&self) -> anyhow::Result<(Dadf, RunConfig)> {
        let config = self.run_config()?;
        let model = build_model(&config)?;
        let mut model = model;
        let fp = frozen_fingerprint(&model.params);
        if fp != self.frozen_fingerprint {
            bail!("frozen weights do not match the checkpoint fingerprint");
        }
        let mut seen = 0;
        for id in model.params.ids().collect::<Vec<_>>() {
            let e = model.params.entry(id);
            if e.role == Role::Frozen {
                continue;
            }
            let rec = self
                .tensors
                .get(&e.name)
                .ok_or_else(|| anyhow!("checkpoint lacks tensor `{}`", e.name))?;
            if rec.shape != e.value.shape() {
                bail!(
                    "tensor `{}` has shape {:?}, expected {:?}",
                    e.name,
                    rec.shape,
                    e.value.shape()
                );
            }
            *model.params.get_mut(id) = Tensor::from_vec(&rec.shape, rec.data.clone())?;
            seen += 1;
        }
        if seen != self.tensors.len() {
            bail!(
                "checkpoint has {} tensors the model does not use",
                self.tensors.len() - seen
            );
        }
        model.set_steps_taken(self.steps);
        Ok((model, config))
    }
}

pub fn load_checkpoint(path: &Path) -> anyhow::Result<(Dadf, RunConfig, Checkpoint)> {
    let ck = Checkpoint::read(path)?;
    let (model, config) = ck.restore()?;
    Ok((model, config, ck))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneFile {
    pub format: String,
    pub version: u32,
    pub tensors: BTreeMap<String, TensorRecord>,
}

pub fn save_backbone(ps: &ParamStore, path: &Path) -> anyhow::Result<()> {
    let tensors = ps
        .entries()
        .iter()
        .filter(|e| e.role == Role::Frozen)
        .map(|e| {
            (
                e.name.clone(),
                TensorRecord {
                    group: e.group.clone(),
                    shape: e.value.shape().to_vec(),
                    data: e.value.data().to_vec(),
                },
            )
        })
        .collect();
    let file = BackboneFile {
        format: BACKBONE_FORMAT.into(),
        version: VERSION,
        tensors,
    };
    std::fs::write(path, serde_json::to_string(&file)?).with_context(|| format!("writing {}", path.display()))
}

/// Overwrites every frozen tensor from a backbone file. All frozen tensors
/// must be present with matching shapes.
pub fn load_backbone(ps: &mut ParamStore, path: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: BackboneFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if file.format != BACKBONE_FORMAT || file.version != VERSION {
        bail!("{}: not a version {VERSION} {BACKBONE_FORMAT} file", path.display());
    }
    for id in ps.ids().collect::<Vec<_>>() {
        let e = ps.entry(id);
        if e.role != Role::Frozen {
            continue;
        }
        let rec = file
            .tensors
            .get(&e.name)
            .ok_or_else(|| anyhow!("{}: missing tensor `{}`", path.display(), e.name))?;
        if rec.shape != e.value.shape() {
            bail!(
                "{}: tensor `{}` has shape {:?}, expected {:?}",
                path.display(),
                e.name,
                rec.shape,
                e.value.shape()
            );
        }
        let t = Tensor::from_vec(&rec.shape, rec.data.clone())?;
        t.ensure_finite("backbone tensor")?;
        *ps.get_mut(id) = t;
    }
    Ok(())
}

/// Builds a fresh model for `config`, loading external backbone weights when
/// configured.
pub fn build_model(config: &RunConfig) -> anyhow::Result<Dadf> {
    let mut model = Dadf::new(config.model.clone())?;
    if let Some(p) = &config.backbone_ckpt {
        load_backbone(&mut model.params, p)?;
    }
    Ok(model)
}
