//! Writes a synthetic dataset to disk: images, masks and one manifest per
//! split, plus an optional compression-shifted copy of the test split.

use std::path::{Path, PathBuf};

use anyhow::Context;
use dadf_core::data::{domain_shift, split_plan, synth_sample, ForgeryParams, ShiftKind, Split};

use crate::imageio::{save_image, save_mask};
use crate::manifest::{Manifest, ManifestEntry};

pub const SHIFT_KIND: ShiftKind = ShiftKind::Compression;
pub const SHIFT_SEVERITY: u32 = 2;

#[derive(Debug, Clone)]
pub struct GenerateOptions {
    pub out: PathBuf,
    pub seed: u64,
    pub size: usize,
    /// Train, val and test counts.
    pub counts: [usize; 3],
    pub shifted: bool,
    pub forgery: ForgeryParams,
}

impl GenerateOptions {
    pub fn desk(out: impl Into<PathBuf>, seed: u64) -> Self {
        Self {
            out: out.into(),
            seed,
            size: 64,
            counts: [200, 50, 100],
            shifted: true,
            forgery: ForgeryParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub train: PathBuf,
    pub val: PathBuf,
    pub test: PathBuf,
    pub test_shifted: Option<PathBuf>,
}

fn entry(dir: &str, name: &str, sample: &dadf_core::data::Sample) -> ManifestEntry {
    ManifestEntry {
        image_path: PathBuf::from(format!("images/{dir}/{name}.png")),
        label: sample.label,
        mask_path: Some(PathBuf::from(format!("masks/{dir}/{name}.png"))),
        domain_tag: sample.domain_tag.clone(),
    }
}

fn write_sample(root: &Path, dir: &str, name: &str, sample: &dadf_core::data::Sample) -> anyhow::Result<()> {
    save_image(&sample.image, &root.join(format!("images/{dir}/{name}.png")))?;
    save_mask(&sample.mask, &root.join(format!("masks/{dir}/{name}.png")))
}

pub fn generate(opts: &GenerateOptions) -> anyhow::Result<GeneratedDataset> {
    let root = &opts.out;
    let mut dirs: Vec<String> = Split::ALL.iter().map(|s| s.as_str().to_string()).collect();
    let shifted_dir = format!("test_{}{}", SHIFT_KIND.as_str(), SHIFT_SEVERITY);
    if opts.shifted {
        dirs.push(shifted_dir.clone());
    }
    for d in &dirs {
        for kind in ["images", "masks"] {
            let p = root.join(kind).join(d);
            std::fs::create_dir_all(&p).with_context(|| format!("creating {}", p.display()))?;
        }
    }
    let mut manifests = [Manifest::default(), Manifest::default(), Manifest::default()];
    let mut shifted = Manifest::default();
    for (split, index, fake) in split_plan(opts.counts) {
        let sample = synth_sample(opts.seed, index, opts.size, fake, &opts.forgery)?;
        let name = format!("{index:05}");
        let dir = split.as_str();
        write_sample(root, dir, &name, &sample)?;
        manifests[split as usize].entries.push(entry(dir, &name, &sample));
        if opts.shifted && split == Split::Test {
            let s = domain_shift(&sample, SHIFT_KIND, SHIFT_SEVERITY)?;
            write_sample(root, &shifted_dir, &name, &s)?;
            shifted.entries.push(entry(&shifted_dir, &name, &s));
        }
    }
    let path = |n: &str| root.join(format!("{n}.tsv"));
    for (split, m) in Split::ALL.iter().zip(&manifests) {
        m.write(&path(split.as_str()))?;
    }
    let test_shifted = if opts.shifted {
        let p = path("test_shifted");
        shifted.write(&p)?;
        Some(p)
    } else {
        None
    };
    Ok(GeneratedDataset {
        train: path("train"),
        val: path("val"),
        test: path("test"),
        test_shifted,
    })
}
