//! Upsampling mask decoder and the pooled classification head.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;

use crate::backbone::FeatureMap;
use crate::error::{Error, Result};
use crate::nn::{relu_backward, relu_inplace, Conv2d, ConvCache, Linear, LinearCache};
use crate::params::{normal_tensor, Grads, ParamStore, Role};
use crate::tensor::Tensor;

pub const DECODER_GROUP: &str = "decoder";
pub const CLS_GROUP: &str = "cls_head";

/// Nearest-neighbour upsampling of a `[b, h, w, c]` grid by an integer factor.
pub fn upsample_nearest(x: &Tensor, factor: usize) -> Tensor {
    let (b, h, w, c) = x.dims4();
    if factor == 1 {
        return x.clone();
    }
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Tensor::zeros(&[b, oh, ow, c]);
    let src = x.data();
    let dst = out.data_mut();
    for bi in 0..b {
        for y in 0..oh {
            for xx in 0..ow {
                let s = ((bi * h + y / factor) * w + xx / factor) * c;
                let d = ((bi * oh + y) * ow + xx) * c;
                dst[d..d + c].copy_from_slice(&src[s..s + c]);
            }
        }
    }
    out
}

/// Adjoint of [`upsample_nearest`]: sums each `factor x factor` block.
pub fn upsample_nearest_backward(g: &Tensor, factor: usize) -> Tensor {
    let (b, oh, ow, c) = g.dims4();
    if factor == 1 {
        return g.clone();
    }
    let (h, w) = (oh / factor, ow / factor);
    let mut out = Tensor::zeros(&[b, h, w, c]);
    let src = g.data();
    let dst = out.data_mut();
    for bi in 0..b {
        for y in 0..oh {
            for xx in 0..ow {
                let d = ((bi * h + y / factor) * w + xx / factor) * c;
                let s = ((bi * oh + y) * ow + xx) * c;
                for (a, v) in dst[d..d + c].iter_mut().zip(&src[s..s + c]) {
                    *a += v;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Number of 2x upsampling stages; each is followed by a 3x3 conv + ReLU.
    pub stages: usize,
    /// Output channels of each stage.
    pub channels: Vec<usize>,
}

impl DecoderConfig {
    pub fn desk() -> Self {
        Self {
            stages: 3,
            channels: vec![32, 16, 16],
        }
    }

    pub fn validate(&self, patch_size: usize) -> Result<()> {
        if self.channels.len() != self.stages {
            return Err(Error::Config(format!(
                "decoder.channels has {} entries for {} stages",
                self.channels.len(),
                self.stages
            )));
        }
        if self.channels.contains(&0) {
            return Err(Error::Config("decoder channels must be positive".into()));
        }
        let up = 1usize << self.stages;
        if patch_size % up != 0 {
            return Err(Error::Config(format!(
                "patch size {patch_size} is not a multiple of the decoder upsampling {up}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct MaskDecoder {
    pub config: DecoderConfig,
    pub stages: Vec<Conv2d>,
    /// Remaining nearest-neighbour factor applied after the stages.
    pub final_upsample: usize,
    pub mask: Conv2d,
}

#[derive(Debug, Clone)]
pub struct DecoderCache {
    stages: Vec<(ConvCache, Tensor)>,
    mask: ConvCache,
}

impl MaskDecoder {
    pub fn new<R: Rng + ?Sized>(
        ps: &mut ParamStore,
        config: DecoderConfig,
        in_channels: usize,
        patch_size: usize,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate(patch_size)?;
        let mut stages = Vec::new();
        let mut c = in_channels;
        for (i, &out) in config.channels.iter().enumerate() {
            stages.push(Conv2d::new(
                ps,
                &format!("decoder.stage{i}"),
                DECODER_GROUP,
                c,
                out,
                3,
                1,
                rng,
            ));
            c = out;
        }
        let mask = Conv2d::new(ps, "decoder.mask", DECODER_GROUP, c, 1, 1, 1, rng);
        Ok(Self {
            final_upsample: patch_size >> config.stages,
            config,
            stages,
            mask,
        })
    }

    pub fn penultimate_channels(&self) -> usize {
        self.stages.last().map(|s| s.out_ch).unwrap_or(self.mask.in_ch)
    }

    /// Returns `[b, H, W, 1]` mask logits and the `[b, H, W, c]` features
    /// they are computed from.
    pub fn decode(&self, ps: &ParamStore, f: &FeatureMap) -> Result<(Tensor, Tensor, DecoderCache)> {
        f.ensure_finite("decoder input")?;
        let mut x = f.clone();
        let mut caches = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            let up = upsample_nearest(&x, 2);
            let (mut y, c) = conv.forward(ps, &up)?;
            relu_inplace(&mut y);
            caches.push((c, y.clone()));
            x = y;
        }
        let pen = upsample_nearest(&x, self.final_upsample);
        let (logits, mask) = self.mask.forward(ps, &pen)?;
        Ok((logits, pen, DecoderCache { stages: caches, mask }))
    }

    /// Back-propagates gradients of the mask logits and of the penultimate
    /// features; returns the gradient with respect to the decoder input.
    pub fn backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &DecoderCache,
        d_logits: &Tensor,
        d_pen: Option<&Tensor>,
    ) -> FeatureMap {
        let mut g = self.mask.backward(ps, grads, &cache.mask, d_logits, true).unwrap();
        if let Some(dp) = d_pen {
            g.add_assign(dp);
        }
        let mut g = upsample_nearest_backward(&g, self.final_upsample);
        for (conv, (c, out)) in self.stages.iter().zip(&cache.stages).rev() {
            relu_backward(out, &mut g);
            let dup = conv.backward(ps, grads, c, &g, true).unwrap();
            g = upsample_nearest_backward(&dup, 2);
        }
        g
    }
}

/// What the classification head pools.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClsInput {
    Penultimate,
    Mask,
}

impl FromStr for ClsInput {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "penultimate" => Ok(Self::Penultimate),
            "mask" => Ok(Self::Mask),
            other => Err(Error::Config(format!("unknown cls input `{}`", other.to_string()))),
        }
    }
}

impl ClsInput {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Penultimate => "penultimate",
            Self::Mask => "mask",
        }
    }
}

/// Global average pooling followed by a fully connected layer to one logit.
#[derive(Debug, Clone)]
pub struct Classifier {
    pub input: ClsInput,
    pub fc: Linear,
}

#[derive(Debug, Clone)]
pub struct ClassifierCache {
    fc: LinearCache,
    spatial: (usize, usize, usize, usize),
}

impl Classifier {
    pub fn new<R: Rng + ?Sized>(ps: &mut ParamStore, input: ClsInput, channels: usize, rng: &mut R) -> Self {
        let w = normal_tensor(rng, &[channels, 1], 1.0 / libm::sqrt(channels as f64));
        Self {
            input,
            fc: Linear::from_weight(ps, "cls_head.fc", CLS_GROUP, Role::Trainable, w),
        }
    }

    pub fn pool(x: &Tensor) -> Tensor {
        let (b, h, w, c) = x.dims4();
        let n = (h * w) as f64;
        let mut pooled = Tensor::zeros(&[b, c]);
        for bi in 0..b {
            let dst = &mut pooled.data_mut()[bi * c..(bi + 1) * c];
            for row in x.data()[bi * h * w * c..(bi + 1) * h * w * c].chunks_exact(c) {
                for (a, v) in dst.iter_mut().zip(row) {
                    *a += v;
                }
            }
            dst.iter_mut().for_each(|v| *v /= n);
        }
        pooled
    }

    /// One logit per sample.
    pub fn classify(&self, ps: &ParamStore, x: &Tensor) -> Result<(Vec<f64>, ClassifierCache)> {
        let pooled = Self::pool(x);
        let (logits, fc) = self.fc.forward(ps, &pooled)?;
        Ok((logits.into_data(), ClassifierCache { fc, spatial: x.dims4() }))
    }

    pub fn backward(&self, ps: &ParamStore, grads: &mut Grads, cache: &ClassifierCache, d_logits: &[f64]) -> Tensor {
        let (b, h, w, c) = cache.spatial;
        let g = Tensor::from_vec(&[b, 1], d_logits.to_vec()).expect("one logit per sample");
        let dp = self.fc.backward(ps, grads, &cache.fc, &g, true).unwrap();
        let n = (h * w) as f64;
        let mut dx = Tensor::zeros(&[b, h, w, c]);
        for bi in 0..b {
            let src = &dp.data()[bi * c..(bi + 1) * c];
            for row in dx.data_mut()[bi * h * w * c..(bi + 1) * h * w * c].chunks_exact_mut(c) {
                for (a, v) in row.iter_mut().zip(src) {
                    *a = v / n;
                }
            }
        }
        dx
    }
}

/// Maximum relative error of the analytic gradients of
/// `sum(head_mask * logits) + sum(head_pen * penultimate)` with respect to
/// the decoder input and every decoder parameter.
pub fn decoder_gradcheck(
    decoder: &MaskDecoder,
    ps: &mut ParamStore,
    probe: &FeatureMap,
    head_mask: &Tensor,
    head_pen: &Tensor,
) -> f64 {
    let dot = |a: &Tensor, b: &Tensor| -> f64 { a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum() };
    let mut grads = Grads::new(ps);
    let (_, _, cache) = decoder.decode(ps, probe).expect("decode");
    let dx = decoder.backward(ps, &mut grads, &cache, head_mask, Some(head_pen));
    let eval = |ps: &ParamStore, x: &Tensor| {
        let (logits, pen, _) = decoder.decode(ps, x).expect("decode");
        dot(&logits, head_mask) + dot(&pen, head_pen)
    };
    let step = crate::gradcheck::DEFAULT_STEP;
    let ex = crate::gradcheck::check_input(probe, &dx, step, |x| eval(ps, x));
    let mut ids = Vec::new();
    for conv in decoder.stages.iter().chain(core::iter::once(&decoder.mask)) {
        ids.push(conv.weight);
        ids.push(conv.bias);
    }
    let ep = crate::gradcheck::check_params(ps, &ids, &grads, step, |ps| eval(ps, probe));
    ex.max(ep)
}

/// Same check for the classifier: `sum(head * logits)` against its input and
/// parameters.
pub fn classifier_gradcheck(cls: &Classifier, ps: &mut ParamStore, probe: &Tensor, head: &[f64]) -> f64 {
    let mut grads = Grads::new(ps);
    let (_, cache) = cls.classify(ps, probe).expect("classify");
    let dx = cls.backward(ps, &mut grads, &cache, head);
    let eval = |ps: &ParamStore, x: &Tensor| {
        let (logits, _) = cls.classify(ps, x).expect("classify");
        logits.iter().zip(head).map(|(a, b)| a * b).sum::<f64>()
    };
    let step = crate::gradcheck::DEFAULT_STEP;
    let ex = crate::gradcheck::check_input(probe, &dx, step, |x| eval(ps, x));
    let ids = [cls.fc.weight, cls.fc.bias];
    let ep = crate::gradcheck::check_params(ps, &ids, &grads, step, |ps| eval(ps, probe));
    ex.max(ep)
}
