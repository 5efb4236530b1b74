//! Side-by-side panels: input | ground truth | predicted mask | attention.

use std::path::{Path, PathBuf};

use anyhow::Context;
use dadf_core::data::Sample;
use dadf_core::model::Dadf;
use dadf_core::Tensor;
use image::{Rgb, RgbImage};

use crate::imageio::to_u8;

/// Channel-mean attention map of one sample, min-max scaled to `[0, 255]`
/// and upsampled by pixel replication to `height x width`.
pub fn attention_gray(att: &Tensor, sample: usize, height: usize, width: usize) -> Vec<u8> {
    let (_, h, w, c) = att.dims4();
    let base = sample * h * w * c;
    let means: Vec<f64> = (0..h * w)
        .map(|p| att.data()[base + p * c..base + (p + 1) * c].iter().sum::<f64>() / c as f64)
        .collect();
    let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut out = Vec::with_capacity(height * width);
    for y in 0..height {
        for x in 0..width {
            let v = means[(y * h / height) * w + x * w / width];
            out.push(if span > 0.0 { to_u8((v - lo) / span) } else { 0 });
        }
    }
    out
}

/// Builds one panel per sample. Panels are `4 * width` wide.
pub fn panels(model: &Dadf, samples: &[Sample], batch: usize) -> anyhow::Result<Vec<RgbImage>> {
    let indices: Vec<u64> = (0..samples.len() as u64).collect();
    let bs = batch.max(1);
    let preds = model.predict_all(samples, &indices, bs)?;
    let mut out = Vec::with_capacity(samples.len());
    for (pred, chunk) in preds.iter().zip(samples.chunks(bs)) {
        for (i, s) in chunk.iter().enumerate() {
            let (h, w) = (s.image.height(), s.image.width());
            let mut img = RgbImage::new(4 * w as u32, h as u32);
            let att = pred.attention.as_ref().map(|a| attention_gray(a, i, h, w));
            let probs = &pred.mask_prob.data()[i * h * w..(i + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let p = s.image.pixel(y, x).map(to_u8);
                    let gt = if s.mask.get(y, x) { 255 } else { 0 };
                    let pm = if probs[y * w + x] >= 0.5 { 255 } else { 0 };
                    let a = att.as_ref().map_or(0, |a| a[y * w + x]);
                    let (xu, yu, wu) = (x as u32, y as u32, w as u32);
                    img.put_pixel(xu, yu, Rgb(p));
                    img.put_pixel(wu + xu, yu, Rgb([gt; 3]));
                    img.put_pixel(2 * wu + xu, yu, Rgb([pm; 3]));
                    img.put_pixel(3 * wu + xu, yu, Rgb([a; 3]));
                }
            }
            out.push(img);
        }
    }
    Ok(out)
}

/// Writes `panel_00000.png`, ... into `out_dir`.
pub fn visualize(model: &Dadf, samples: &[Sample], out_dir: &Path, batch: usize) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut paths = Vec::with_capacity(samples.len());
    for (i, p) in panels(model, samples, batch)?.into_iter().enumerate() {
        let path = out_dir.join(format!("panel_{i:05}.png"));
        p.save(&path).with_context(|| format!("writing {}", path.display()))?;
        paths.push(path);
    }
    Ok(paths)
}
