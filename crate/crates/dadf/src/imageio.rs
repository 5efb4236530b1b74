//! Lossless image and mask files. Images are 8-bit RGB PNG; masks are 8-bit
//! grayscale PNG with values {0, 255}.

use std::path::Path;

use anyhow::{bail, Context};
use dadf_core::backbone::ImageTensor;
use dadf_core::data::Mask;
use image::{GrayImage, RgbImage};

pub fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn image_to_rgb(img: &ImageTensor) -> RgbImage {
    let raw: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    RgbImage::from_raw(img.width() as u32, img.height() as u32, raw).expect("buffer size")
}

pub fn save_image(img: &ImageTensor, path: &Path) -> anyhow::Result<()> {
    image_to_rgb(img)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn load_image(path: &Path) -> anyhow::Result<ImageTensor> {
    let rgb = image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f64 / 255.0).collect();
    Ok(ImageTensor::new(h as usize, w as usize, data)?)
}

pub fn mask_to_gray(mask: &Mask) -> GrayImage {
    let raw = mask.bits().iter().map(|&b| b * 255).collect();
    GrayImage::from_raw(mask.width() as u32, mask.height() as u32, raw).expect("buffer size")
}

pub fn save_mask(mask: &Mask, path: &Path) -> anyhow::Result<()> {
    mask_to_gray(mask)
        .save(path)
        .with_context(|| format!("writing {}", path.display()))
}

pub fn load_mask(path: &Path) -> anyhow::Result<Mask> {
    let gray = image::open(path)
        .with_context(|| format!("reading {}", path.display()))?
        .to_luma8();
    let (w, h) = gray.dimensions();
    let mut bits = Vec::with_capacity((w * h) as usize);
    for v in gray.into_raw() {
        match v {
            0 => bits.push(0),
            255 => bits.push(1),
            other => bail!("{}: mask value {other} is not 0 or 255", path.display()),
        }
    }
    Ok(Mask::from_bits(h as usize, w as usize, bits)?)
}
