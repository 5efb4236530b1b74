//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default, so a config file only needs the keys it changes; `--set key=value`
//! overrides are applied after the file in the order given.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dadf_core::adapter::AdapterVariant;
use dadf_core::backbone::AdapterPlacement;
use dadf_core::model::ModelConfig;
use dadf_core::optim::AdamWConfig;
use dadf_core::rga::RecData;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    Value { key: String, value: String, reason: String },
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
    pub eval_batch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSettings {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblateSettings {
    pub components: bool,
    pub variants: Vec<AdapterVariant>,
    pub rec_data: Vec<RecData>,
    /// Overrides `train.epochs` for every ablation run when set.
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub backbone_ckpt: Option<PathBuf>,
    pub train: TrainSettings,
    pub data: DataSettings,
    pub out_dir: PathBuf,
    pub ablate: AblateSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk(),
            backbone_ckpt: None,
            train: TrainSettings {
                batch_size: 4,
                epochs: 30,
                optimizer: AdamWConfig::default(),
                seed: 0,
                eval_batch: 8,
            },
            data: DataSettings {
                train: PathBuf::from("data/train.tsv"),
                val: PathBuf::from("data/val.tsv"),
                test: vec![PathBuf::from("data/test.tsv")],
            },
            out_dir: PathBuf::from("runs/default"),
            ablate: AblateSettings {
                components: true,
                variants: vec![
                    AdapterVariant::Full,
                    AdapterVariant::B,
                    AdapterVariant::C,
                    AdapterVariant::D,
                ],
                rec_data: vec![RecData::Real, RecData::Fake, RecData::Both],
                epochs: None,
            },
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::Value {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::Value {
            key: key.into(),
            value: value.into(),
            reason: "expected true/false or on/off".into(),
        }),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn onoff(v: bool) -> &'static str {
    if v {
        "on"
    } else {
        "off"
    }
}

impl RunConfig {
    pub const KEYS: &'static [&'static str] = &[
        "model.image_size",
        "model.patch_size",
        "model.embed_dim",
        "model.num_layers",
        "model.num_heads",
        "model.mlp_ratio",
        "model.task_dim",
        "model.placement",
        "model.init_std",
        "model.init_seed",
        "model.backbone_ckpt",
        "adapter.variant",
        "adapter.mid_channels",
        "rga.enabled",
        "rga.noise_mean",
        "rga.noise_variance",
        "rga.inference_noise",
        "rga.seed",
        "rga.rec_data",
        "rga.rec_reduction",
        "decoder.stages",
        "decoder.channels",
        "cls.input",
        "loss.lambda1",
        "loss.lambda2",
        "loss.seg",
        "train.batch_size",
        "train.epochs",
        "train.lr",
        "train.beta1",
        "train.beta2",
        "train.eps",
        "train.weight_decay",
        "train.seed",
        "train.eval_batch",
        "data.train",
        "data.val",
        "data.test",
        "out.dir",
        "ablate.components",
        "ablate.variants",
        "ablate.rec_data",
        "ablate.epochs",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let m = &mut self.model;
        let b = &mut m.backbone;
        match key {
            "model.image_size" => b.image_size = parse(key, v)?,
            "model.patch_size" => b.patch_size = parse(key, v)?,
            "model.embed_dim" => b.embed_dim = parse(key, v)?,
            "model.num_layers" => b.num_layers = parse(key, v)?,
            "model.num_heads" => b.num_heads = parse(key, v)?,
            "model.mlp_ratio" => b.mlp_ratio = parse(key, v)?,
            "model.task_dim" => b.task_dim = parse(key, v)?,
            "model.placement" => {
                b.placement = match v {
                    "pre" => AdapterPlacement::Pre,
                    "post" => AdapterPlacement::Post,
                    _ => {
                        return Err(ConfigError::Value {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected pre or post".into(),
                        })
                    }
                }
            }
            "model.init_std" => b.init_std = parse(key, v)?,
            "model.init_seed" => m.init_seed = parse(key, v)?,
            "model.backbone_ckpt" => self.backbone_ckpt = (!v.is_empty()).then(|| PathBuf::from(v)),
            "adapter.variant" => m.adapter_variant = parse(key, v)?,
            "adapter.mid_channels" => m.adapter_mid_channels = if v == "auto" { None } else { Some(parse(key, v)?) },
            "rga.enabled" => m.rga_enabled = parse_bool(key, v)?,
            "rga.noise_mean" => m.rga.noise_mean = parse(key, v)?,
            "rga.noise_variance" => m.rga.noise_variance = parse(key, v)?,
            "rga.inference_noise" => m.rga.inference_noise = parse_bool(key, v)?,
            "rga.seed" => m.rga.seed = parse(key, v)?,
            "rga.rec_data" => m.rec_data = parse(key, v)?,
            "rga.rec_reduction" => m.rec_reduction = parse(key, v)?,
            "decoder.stages" => m.decoder.stages = parse(key, v)?,
            "decoder.channels" => m.decoder.channels = parse_list(key, v)?,
            "cls.input" => m.cls_input = parse(key, v)?,
            "loss.lambda1" => m.weights.lambda1 = parse(key, v)?,
            "loss.lambda2" => m.weights.lambda2 = parse(key, v)?,
            "loss.seg" => m.seg_loss = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.epochs" => self.train.epochs = parse(key, v)?,
            "train.lr" => self.train.optimizer.lr = parse(key, v)?,
            "train.beta1" => self.train.optimizer.beta1 = parse(key, v)?,
            "train.beta2" => self.train.optimizer.beta2 = parse(key, v)?,
            "train.eps" => self.train.optimizer.eps = parse(key, v)?,
            "train.weight_decay" => self.train.optimizer.weight_decay = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.eval_batch" => self.train.eval_batch = parse(key, v)?,
            "data.train" => self.data.train = PathBuf::from(v),
            "data.val" => self.data.val = PathBuf::from(v),
            "data.test" => {
                self.data.test = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "out.dir" => self.out_dir = PathBuf::from(v),
            "ablate.components" => self.ablate.components = parse_bool(key, v)?,
            "ablate.variants" => self.ablate.variants = parse_list(key, v)?,
            "ablate.rec_data" => self.ablate.rec_data = parse_list(key, v)?,
            "ablate.epochs" => self.ablate.epochs = if v.is_empty() { None } else { Some(parse(key, v)?) },
            _ => return Err(ConfigError::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String, ConfigError> {
        let m = &self.model;
        let b = &m.backbone;
        let path = |p: &Path| p.display().to_string();
        Ok(match key {
            "model.image_size" => b.image_size.to_string(),
            "model.patch_size" => b.patch_size.to_string(),
            "model.embed_dim" => b.embed_dim.to_string(),
            "model.num_layers" => b.num_layers.to_string(),
            "model.num_heads" => b.num_heads.to_string(),
            "model.mlp_ratio" => b.mlp_ratio.to_string(),
            "model.task_dim" => b.task_dim.to_string(),
            "model.placement" => match b.placement {
                AdapterPlacement::Pre => "pre".into(),
                AdapterPlacement::Post => "post".into(),
            },
            "model.init_std" => format!("{:?}", b.init_std),
            "model.init_seed" => m.init_seed.to_string(),
            "model.backbone_ckpt" => self.backbone_ckpt.as_deref().map(path).unwrap_or_default(),
            "adapter.variant" => m.adapter_variant.as_str().into(),
            "adapter.mid_channels" => m.adapter_mid_channels.map_or("auto".into(), |c| c.to_string()),
            "rga.enabled" => onoff(m.rga_enabled).into(),
            "rga.noise_mean" => format!("{:?}", m.rga.noise_mean),
            "rga.noise_variance" => format!("{:?}", m.rga.noise_variance),
            "rga.inference_noise" => onoff(m.rga.inference_noise).into(),
            "rga.seed" => m.rga.seed.to_string(),
            "rga.rec_data" => m.rec_data.as_str().into(),
            "rga.rec_reduction" => m.rec_reduction.as_str().into(),
            "decoder.stages" => m.decoder.stages.to_string(),
            "decoder.channels" => join(&m.decoder.channels),
            "cls.input" => m.cls_input.as_str().into(),
            "loss.lambda1" => format!("{:?}", m.weights.lambda1),
            "loss.lambda2" => format!("{:?}", m.weights.lambda2),
            "loss.seg" => m.seg_loss.as_str().into(),
            "train.batch_size" => self.train.batch_size.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.lr" => format!("{:?}", self.train.optimizer.lr),
            "train.beta1" => format!("{:?}", self.train.optimizer.beta1),
            "train.beta2" => format!("{:?}", self.train.optimizer.beta2),
            "train.eps" => format!("{:?}", self.train.optimizer.eps),
            "train.weight_decay" => format!("{:?}", self.train.optimizer.weight_decay),
            "train.seed" => self.train.seed.to_string(),
            "train.eval_batch" => self.train.eval_batch.to_string(),
            "data.train" => path(&self.data.train),
            "data.val" => path(&self.data.val),
            "data.test" => self.data.test.iter().map(|p| path(p)).collect::<Vec<_>>().join(","),
            "out.dir" => path(&self.out_dir),
            "ablate.components" => onoff(self.ablate.components).into(),
            "ablate.variants" => self
                .ablate
                .variants
                .iter()
                .map(|v| v.as_str())
                .collect::<Vec<_>>()
                .join(","),
            "ablate.rec_data" => self
                .ablate
                .rec_data
                .iter()
                .map(|v| v.as_str())
                .collect::<Vec<_>>()
                .join(","),
            "ablate.epochs" => self.ablate.epochs.map(|e| e.to_string()).unwrap_or_default(),
            _ => return Err(ConfigError::UnknownKey(key.into())),
        })
    }

    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o.split_once('=').ok_or_else(|| ConfigError::Override(o.into()))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Every key in canonical order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.train
            .optimizer
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.train.batch_size == 0 {
            return Err(ConfigError::Invalid("train.batch_size must be at least 1".into()));
        }
        if self.train.epochs == 0 {
            return Err(ConfigError::Invalid("train.epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Reads a config file and applies overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> anyhow::Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?;
        cfg.apply_text(&text)
            .map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
    }
    cfg.apply_overrides(overrides)?;
    cfg.validate()?;
    Ok(cfg)
}
