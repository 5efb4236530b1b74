//! Procedural face-like images, copy-paste forgeries with pixel-exact masks,
//! and degradations used as domain shifts.
//!
//! Every generated pixel value is a multiple of 1/255 so images survive a
//! round trip through 8-bit lossless files unchanged.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::backbone::ImageTensor;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Real,
    Fake,
}

impl Label {
    /// Binary target, fake = 1.
    pub fn target(self) -> f64 {
        match self {
            Self::Real => 0.0,
            Self::Fake => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Real => "real",
            Self::Fake => "fake",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "real" | "0" => Ok(Self::Real),
            "fake" | "1" => Ok(Self::Fake),
            other => Err(Error::InvalidLabel(other.to_string())),
        }
    }
}

/// Binary mask stored as 0/1 bytes, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_bits(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                left: vec![height, width],
                right: vec![data.len()],
            });
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::NonBinary);
        }
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn area(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn fraction(&self) -> f64 {
        self.area() as f64 / self.data.len().max(1) as f64
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v != 0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: ImageTensor,
    pub label: Label,
    pub mask: Mask,
    pub domain_tag: String,
}

impl Sample {
    pub fn validate(&self) -> Result<()> {
        if self.mask.height != self.image.height() || self.mask.width != self.image.width() {
            return Err(Error::ShapeMismatch {
                left: vec![self.image.height(), self.image.width()],
                right: vec![self.mask.height, self.mask.width],
            });
        }
        match (self.label, self.mask.is_empty()) {
            (Label::Real, false) => Err(Error::Config("real sample with a nonempty mask".into())),
            (Label::Fake, true) => Err(Error::Config("fake sample with an empty mask".into())),
            _ => Ok(()),
        }
    }

    /// `[1, h, w, 1]` ground-truth tensor.
    pub fn mask_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, self.mask.height, self.mask.width, 1], self.mask.to_f64()).expect("shape")
    }
}

pub fn quantize(v: f64) -> f64 {
    libm::round(v.clamp(0.0, 1.0) * 255.0) / 255.0
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Deterministic per-sample generator derived from `(seed, index)`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A face-like image: smooth gradient background, shaded elliptical face
/// with its own skin tone and texture, hair, eyes and mouth.
pub fn generate_pristine<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Result<Sample> {
    if size == 0 {
        return Err(Error::Config("image size must be positive".into()));
    }
    let s = size as f64;
    let bg0: [f64; 3] = [
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
    ];
    let bg1: [f64; 3] = [
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
        rng.random_range(0.1..0.9),
    ];
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    let (ct, st) = (libm::cos(theta), libm::sin(theta));

    let cx = 0.5 + rng.random_range(-0.06..0.06);
    let cy = 0.52 + rng.random_range(-0.06..0.06);
    let rx = rng.random_range(0.26..0.34);
    let ry = rng.random_range(0.34..0.42);
    let r = rng.random_range(0.55..0.95);
    let g = r * rng.random_range(0.62..0.82);
    let b = g * rng.random_range(0.65..0.9);
    let skin = [r, g, b];
    let hair_v = rng.random_range(0.05..0.35);
    let hair = [
        hair_v * rng.random_range(0.8..1.4),
        hair_v,
        hair_v * rng.random_range(0.6..1.0),
    ];
    let fx = rng.random_range(6.0..18.0);
    let fy = rng.random_range(6.0..18.0);
    let (px, py): (f64, f64) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
    let amp = rng.random_range(0.015..0.05);
    let grain = rng.random_range(0.005..0.02);
    let eye_dx = rx * rng.random_range(0.3..0.4);
    let eye_y = cy - ry * rng.random_range(0.15..0.25);
    let (erx, ery) = (rx * 0.14, ry * 0.07);
    let mouth_y = cy + ry * rng.random_range(0.4..0.5);
    let (mrx, mry) = (rx * rng.random_range(0.25..0.35), ry * 0.07);
    let lip = [rng.random_range(0.5..0.75), 0.2, 0.25];

    let inside = |u: f64, v: f64, x0: f64, y0: f64, ax: f64, ay: f64| {
        let du = (u - x0) / ax;
        let dv = (v - y0) / ay;
        du * du + dv * dv
    };

    let mut data = Vec::with_capacity(size * size * 3);
    for yi in 0..size {
        let v = (yi as f64 + 0.5) / s;
        for xi in 0..size {
            let u = (xi as f64 + 0.5) / s;
            let t = ((u - 0.5) * ct + (v - 0.5) * st + 0.75).clamp(0.0, 1.5) / 1.5;
            let mut px_rgb = [
                lerp(bg0[0], bg1[0], t),
                lerp(bg0[1], bg1[1], t),
                lerp(bg0[2], bg1[2], t),
            ];
            let e = inside(u, v, cx, cy, rx, ry);
            if inside(u, v, cx, cy - ry * 0.12, rx * 1.08, ry * 1.02) <= 1.0 && v < cy - ry * 0.55 {
                px_rgb = hair;
            }
            if e <= 1.0 && !(v < cy - ry * 0.55 && e > 0.55) {
                let shade = 1.0 - 0.25 * e;
                let tex = amp * libm::sin(2.0 * PI * (fx * u + px)) * libm::sin(2.0 * PI * (fy * v + py));
                for c in 0..3 {
                    px_rgb[c] = skin[c] * shade + tex;
                }
                for ex in [cx - eye_dx, cx + eye_dx] {
                    let ee = inside(u, v, ex, eye_y, erx, ery);
                    if ee <= 1.0 {
                        px_rgb = if ee < 0.3 {
                            [0.05, 0.05, 0.07]
                        } else {
                            [0.92, 0.92, 0.9]
                        };
                    }
                }
                if inside(u, v, cx, mouth_y, mrx, mry) <= 1.0 {
                    px_rgb = lip;
                }
            }
            for c in px_rgb {
                data.push(quantize(c + grain * rng.random_range(-1.0..1.0)));
            }
        }
    }
    Ok(Sample {
        image: ImageTensor::new(size, size, data)?,
        label: Label::Real,
        mask: Mask::zeros(size, size),
        domain_tag: String::from("clean"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForgeryParams {
    pub min_frac: f64,
    pub max_frac: f64,
    /// Feather width in pixels at the region boundary; 0 pastes hard edges.
    pub blend_width: usize,
    /// Probability of a polygonal region instead of an ellipse.
    pub polygon_prob: f64,
    /// Amplitude of the 2x2 periodic pattern left on pasted pixels, a stand-in
    /// for the upsampling traces of face generators. 0 disables it.
    pub trace_amplitude: f64,
}

impl Default for ForgeryParams {
    fn default() -> Self {
        Self {
            min_frac: 0.05,
            max_frac: 0.35,
            blend_width: 0,
            polygon_prob: 0.5,
            trace_amplitude: 4.0 / 255.0,
        }
    }
}

fn rasterize_ellipse(size: usize, cx: f64, cy: f64, rx: f64, ry: f64, angle: f64) -> Mask {
    let mut m = Mask::zeros(size, size);
    let (ca, sa) = (libm::cos(angle), libm::sin(angle));
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            let u = (dx * ca + dy * sa) / rx;
            let v = (-dx * sa + dy * ca) / ry;
            m.set(y, x, u * u + v * v <= 1.0);
        }
    }
    m
}

fn rasterize_polygon(size: usize, pts: &[(f64, f64)]) -> Mask {
    let mut m = Mask::zeros(size, size);
    for y in 0..size {
        let py = y as f64 + 0.5;
        for x in 0..size {
            let px = x as f64 + 0.5;
            let mut inside = false;
            let mut j = pts.len() - 1;
            for i in 0..pts.len() {
                let (xi, yi) = pts[i];
                let (xj, yj) = pts[j];
                if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
                    inside = !inside;
                }
                j = i;
            }
            m.set(y, x, inside);
        }
    }
    m
}

fn random_region<R: Rng + ?Sized>(rng: &mut R, size: usize, params: &ForgeryParams) -> Mask {
    let s = size as f64;
    let total = s * s;
    for _ in 0..200 {
        let target = rng.random_range(params.min_frac..=params.max_frac) * total;
        let cx = rng.random_range(0.3..0.7) * s;
        let cy = rng.random_range(0.3..0.7) * s;
        let m = if rng.random_bool(params.polygon_prob.clamp(0.0, 1.0)) {
            let k = rng.random_range(5..=9);
            let radii: Vec<f64> = (0..k).map(|_| rng.random_range(0.7..1.3)).collect();
            let offset = rng.random_range(0.0..2.0 * PI);
            let unit: Vec<(f64, f64)> = radii
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let a = offset + 2.0 * PI * i as f64 / k as f64;
                    (r * libm::cos(a), r * libm::sin(a))
                })
                .collect();
            let mut area = 0.0;
            for i in 0..k {
                let (x0, y0) = unit[i];
                let (x1, y1) = unit[(i + 1) % k];
                area += x0 * y1 - x1 * y0;
            }
            let scale = libm::sqrt(target / (0.5 * area.abs()));
            let pts: Vec<(f64, f64)> = unit.iter().map(|(x, y)| (cx + x * scale, cy + y * scale)).collect();
            rasterize_polygon(size, &pts)
        } else {
            let aspect = rng.random_range(0.6..1.6);
            let rx = libm::sqrt(target / (PI * aspect));
            let angle = rng.random_range(0.0..PI);
            rasterize_ellipse(size, cx, cy, rx, rx * aspect, angle)
        };
        let f = m.fraction();
        if f >= params.min_frac && f <= params.max_frac {
            return m;
        }
    }
    // centred disc at the middle of the allowed range
    let target = 0.5 * (params.min_frac + params.max_frac) * total;
    let r = libm::sqrt(target / PI);
    rasterize_ellipse(size, s / 2.0, s / 2.0, r, r, 0.0)
}

/// Pastes a random region of `donor` into `base`. The mask is exactly the set
/// of pixels that differ from `base`.
pub fn generate_forgery<R: Rng + ?Sized>(
    base: &Sample,
    donor: &Sample,
    rng: &mut R,
    params: &ForgeryParams,
) -> Result<Sample> {
    let (h, w) = (base.image.height(), base.image.width());
    if donor.image.height() != h || donor.image.width() != w {
        return Err(Error::ShapeMismatch {
            left: vec![h, w],
            right: vec![donor.image.height(), donor.image.width()],
        });
    }
    if h != w {
        return Err(Error::Config("forgery synthesis expects square images".into()));
    }
    if !(params.trace_amplitude >= 0.0) {
        return Err(Error::Config("trace amplitude must be nonnegative".into()));
    }
    if !(0.0 < params.min_frac && params.min_frac <= params.max_frac && params.max_frac <= 1.0) {
        return Err(Error::Config("invalid region fraction range".into()));
    }
    let mask = random_region(rng, h, params);
    let bw = params.blend_width;
    let mut data = base.image.data().to_vec();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(y, x) {
                continue;
            }
            let alpha = if bw == 0 {
                1.0
            } else {
                // Chebyshev distance to the nearest pixel outside the region
                let mut d = bw + 1;
                for r in 1..=bw {
                    let mut hit = false;
                    for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
                        for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
                            if !mask.get(yy, xx) {
                                hit = true;
                            }
                        }
                    }
                    if hit || y < r || x < r || y + r >= h || x + r >= w {
                        d = r;
                        break;
                    }
                }
                d as f64 / (bw + 1) as f64
            };
            let i = (y * w + x) * 3;
            let b = base.image.pixel(y, x);
            let dn = donor.image.pixel(y, x);
            let trace = if (x + y) % 2 == 0 { alpha } else { -alpha } * params.trace_amplitude;
            let mut changed = false;
            for c in 0..3 {
                data[i + c] = quantize(lerp(b[c], dn[c], alpha) + trace);
                changed |= data[i + c] != b[c];
            }
            if !changed {
                // keep the mask exact: nudge one channel by one level
                data[i] = if b[0] < 0.5 {
                    b[0] + 1.0 / 255.0
                } else {
                    b[0] - 1.0 / 255.0
                };
                data[i] = quantize(data[i]);
            }
        }
    }
    Ok(Sample {
        image: ImageTensor::new(h, w, data)?,
        label: Label::Fake,
        mask,
        domain_tag: base.domain_tag.clone(),
    })
}

/// A real or fake sample fully determined by `(seed, index)`.
pub fn synth_sample(seed: u64, index: u64, size: usize, fake: bool, params: &ForgeryParams) -> Result<Sample> {
    let mut rng = sample_rng(seed, index);
    let base = generate_pristine(&mut rng, size)?;
    if !fake {
        return Ok(base);
    }
    let donor = generate_pristine(&mut rng, size)?;
    generate_forgery(&base, &donor, &mut rng, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ShiftKind {
    Compression,
    Blur,
    ResizeRequantize,
}

impl ShiftKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Compression => "jpeg",
            Self::Blur => "blur",
            Self::ResizeRequantize => "resize",
        }
    }
}

impl FromStr for ShiftKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "jpeg" | "compression" => Ok(Self::Compression),
            "blur" => Ok(Self::Blur),
            "resize" | "resize-requantize" => Ok(Self::ResizeRequantize),
            other => Err(Error::UnknownShift(other.to_string())),
        }
    }
}

const LUMA_Q: [f64; 64] = [
    16., 11., 10., 16., 24., 40., 51., 61., 12., 12., 14., 19., 26., 58., 60., 55., 14., 13., 16., 24., 40., 57., 69.,
    56., 14., 17., 22., 29., 51., 87., 80., 62., 18., 22., 37., 56., 68., 109., 103., 77., 24., 35., 55., 64., 81.,
    104., 113., 92., 49., 64., 78., 87., 103., 121., 120., 101., 72., 92., 95., 98., 112., 100., 103., 99.,
];

const CHROMA_Q: [f64; 64] = [
    17., 18., 24., 47., 99., 99., 99., 99., 18., 21., 26., 66., 99., 99., 99., 99., 24., 26., 56., 99., 99., 99., 99.,
    99., 47., 66., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99.,
    99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99., 99.,
];

fn dct_basis() -> [[f64; 8]; 8] {
    let mut b = [[0.0; 8]; 8];
    for (k, row) in b.iter_mut().enumerate() {
        let a = if k == 0 {
            libm::sqrt(1.0 / 8.0)
        } else {
            libm::sqrt(2.0 / 8.0)
        };
        for (n, v) in row.iter_mut().enumerate() {
            *v = a * libm::cos(PI * (2 * n + 1) as f64 * k as f64 / 16.0);
        }
    }
    b
}

/// Block-DCT quantisation in YCbCr with JPEG tables scaled by `severity / 2`.
fn compress(img: &ImageTensor, severity: u32) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let scale = severity as f64 * 0.5;
    let basis = dct_basis();
    let mut ycc = vec![[0.0f64; 3]; h * w];
    for y in 0..h {
        for x in 0..w {
            let [r, g, b] = img.pixel(y, x).map(|v| v * 255.0);
            ycc[y * w + x] = [
                0.299 * r + 0.587 * g + 0.114 * b - 128.0,
                -0.168_736 * r - 0.331_264 * g + 0.5 * b,
                0.5 * r - 0.418_688 * g - 0.081_312 * b,
            ];
        }
    }
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for ch in 0..3 {
                let table = if ch == 0 { &LUMA_Q } else { &CHROMA_Q };
                let mut block = [[0.0; 8]; 8];
                for (i, row) in block.iter_mut().enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        let yy = (by + i).min(h - 1);
                        let xx = (bx + j).min(w - 1);
                        *v = ycc[yy * w + xx][ch];
                    }
                }
                let mut coef = [[0.0; 8]; 8];
                for u in 0..8 {
                    for v in 0..8 {
                        let mut acc = 0.0;
                        for i in 0..8 {
                            for j in 0..8 {
                                acc += basis[u][i] * basis[v][j] * block[i][j];
                            }
                        }
                        let q = (table[u * 8 + v] * scale).max(1.0);
                        coef[u][v] = libm::round(acc / q) * q;
                    }
                }
                for i in 0..8 {
                    for j in 0..8 {
                        if by + i >= h || bx + j >= w {
                            continue;
                        }
                        let mut acc = 0.0;
                        for u in 0..8 {
                            for v in 0..8 {
                                acc += basis[u][i] * basis[v][j] * coef[u][v];
                            }
                        }
                        ycc[(by + i) * w + bx + j][ch] = acc;
                    }
                }
            }
        }
    }
    let mut out = Vec::with_capacity(h * w * 3);
    for [yv, cb, cr] in ycc {
        let yv = yv + 128.0;
        for v in [yv + 1.402 * cr, yv - 0.344_136 * cb - 0.714_136 * cr, yv + 1.772 * cb] {
            out.push(quantize(v / 255.0));
        }
    }
    out
}

fn gaussian_blur(img: &ImageTensor, sigma: f64) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let radius = libm::ceil(3.0 * sigma) as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let src = img.data();
    let mut tmp = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let xx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += kv * src[(y * w + xx) * 3 + c];
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    let mut out = vec![0.0; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[(yy * w + x) * 3 + c];
                }
                out[(y * w + x) * 3 + c] = quantize(acc);
            }
        }
    }
    out
}

fn resize_bilinear(src: &[f64], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f64> {
    let mut out = vec![0.0; dh * dw * 3];
    for y in 0..dh {
        let fy = ((y as f64 + 0.5) * sh as f64 / dh as f64 - 0.5).clamp(0.0, (sh - 1) as f64);
        let y0 = fy as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for x in 0..dw {
            let fx = ((x as f64 + 0.5) * sw as f64 / dw as f64 - 0.5).clamp(0.0, (sw - 1) as f64);
            let x0 = fx as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            for c in 0..3 {
                let p = |yy: usize, xx: usize| src[(yy * sw + xx) * 3 + c];
                let top = lerp(p(y0, x0), p(y0, x1), tx);
                let bot = lerp(p(y1, x0), p(y1, x1), tx);
                out[(y * dw + x) * 3 + c] = lerp(top, bot, ty);
            }
        }
    }
    out
}

fn resize_requantize(img: &ImageTensor, severity: u32) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let f = (severity + 1) as usize;
    let (sh, sw) = ((h / f).max(1), (w / f).max(1));
    let small = resize_bilinear(img.data(), h, w, sh, sw);
    let back = resize_bilinear(&small, sh, sw, h, w);
    let levels = ((256u32 >> severity.min(7)).max(2) - 1) as f64;
    back.into_iter()
        .map(|v| quantize(libm::round(v.clamp(0.0, 1.0) * levels) / levels))
        .collect()
}

/// Degrades the image; label and mask are left untouched. Severity 0 is the
/// identity.
pub fn domain_shift(sample: &Sample, kind: ShiftKind, severity: u32) -> Result<Sample> {
    if severity == 0 {
        return Ok(sample.clone());
    }
    let img = &sample.image;
    let data = match kind {
        ShiftKind::Compression => compress(img, severity),
        ShiftKind::Blur => gaussian_blur(img, 0.5 * severity as f64),
        ShiftKind::ResizeRequantize => resize_requantize(img, severity),
    };
    Ok(Sample {
        image: ImageTensor::new(img.height(), img.width(), data)?,
        label: sample.label,
        mask: sample.mask.clone(),
        domain_tag: format!("{}-{}", kind.as_str(), severity),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Self::Train, Self::Val, Self::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Train => "train",
            Self::Val => "val",
            Self::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Self::Train),
            "val" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Sample identities for a dataset with `counts` = (train, val, test). Each
/// split is balanced real/fake; identities are global indices, so splits
/// never share an image.
pub fn split_plan(counts: [usize; 3]) -> Vec<(Split, u64, bool)> {
    let mut plan = Vec::with_capacity(counts.iter().sum());
    let mut index = 0u64;
    for (split, &n) in Split::ALL.iter().zip(&counts) {
        for i in 0..n {
            plan.push((*split, index, i % 2 == 1));
            index += 1;
        }
    }
    plan
}
