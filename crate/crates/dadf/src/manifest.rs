//! Dataset manifests: one tab-separated entry per line,
//! `image_path<TAB>label<TAB>mask_path<TAB>domain_tag`.
//!
//! Relative paths are resolved against the manifest's directory. An empty
//! mask path means "no mask" and is only valid for real samples.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use dadf_core::data::{Label, Sample};

use crate::imageio;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
    #[error("{path}:{line}: cannot resolve `{file}`")]
    Missing { path: String, line: usize, file: String },
    #[error("{0}: manifest has no entries")]
    Empty(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub label: Label,
    pub mask_path: Option<PathBuf>,
    pub domain_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base: PathBuf,
}

impl Manifest {
    pub fn parse(text: &str, base: &Path, origin: &str) -> Result<Self, ManifestError> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| ManifestError::Malformed {
                path: origin.into(),
                line: i + 1,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 4 {
                return Err(bad(format!("expected 4 tab-separated fields, found {}", fields.len())));
            }
            if fields[0].is_empty() {
                return Err(bad("empty image path".into()));
            }
            let label: Label = fields[1].parse().map_err(|e: dadf_core::Error| bad(e.to_string()))?;
            let mask_path = (!fields[2].is_empty()).then(|| PathBuf::from(fields[2]));
            if label == Label::Fake && mask_path.is_none() {
                return Err(bad("fake entry without a mask".into()));
            }
            entries.push(ManifestEntry {
                image_path: PathBuf::from(fields[0]),
                label,
                mask_path,
                domain_tag: fields[3].to_string(),
            });
        }
        Ok(Self {
            entries,
            base: base.to_path_buf(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ManifestError> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let mask = e
                .mask_path
                .as_deref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                e.image_path.display(),
                e.label.as_str(),
                mask,
                e.domain_tag
            );
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<(), ManifestError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    /// Checks every referenced file exists. Line numbers count entries from 1.
    pub fn validate(&self, origin: &str) -> Result<(), ManifestError> {
        if self.entries.is_empty() {
            return Err(ManifestError::Empty(origin.into()));
        }
        for (i, e) in self.entries.iter().enumerate() {
            for p in std::iter::once(&e.image_path).chain(e.mask_path.as_ref()) {
                if !self.resolve(p).is_file() {
                    return Err(ManifestError::Missing {
                        path: origin.into(),
                        line: i + 1,
                        file: p.display().to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Loads every sample in order.
    pub fn load_samples(&self) -> anyhow::Result<Vec<Sample>> {
        self.entries
            .iter()
            .map(|e| {
                let image = imageio::load_image(&self.resolve(&e.image_path))?;
                let mask = match &e.mask_path {
                    Some(p) => imageio::load_mask(&self.resolve(p))?,
                    None => dadf_core::data::Mask::zeros(image.height(), image.width()),
                };
                let sample = Sample {
                    image,
                    label: e.label,
                    mask,
                    domain_tag: e.domain_tag.clone(),
                };
                sample
                    .validate()
                    .map_err(|err| anyhow::anyhow!("{}: {err}", e.image_path.display()))?;
                Ok(sample)
            })
            .collect()
    }
}

/// Loads and validates a manifest and all of its samples.
pub fn load_dataset(path: &Path) -> anyhow::Result<(Manifest, Vec<Sample>)> {
    let m = Manifest::load(path).with_context(|| format!("loading {}", path.display()))?;
    m.validate(&path.display().to_string())?;
    let samples = m.load_samples()?;
    Ok((m, samples))
}
