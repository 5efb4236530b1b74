//! Reconstruction guided attention.
//!
//! A second encoder pass on a slightly noised copy of the input gives
//! `F_gau`; the absolute feature difference `S = |F_gau - F|` is turned into a
//! per-channel spatial attention map by a shared 1x1 enhancer and a softmax,
//! and refines the clean features:
//!
//! ```text
//! F_final = softmax_spatial(phi(S)) * phi(F) + F
//! ```
//!
//! The reconstruction loss pulls `F_gau` towards `F` for the selected samples
//! (real ones by default).

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::backbone::FeatureMap;
use crate::data::Label;
use crate::error::{Error, Result};
use crate::nn::{Linear, LinearCache};
use crate::params::{identity_matrix, Grads, ParamStore, Role};
use crate::tensor::Tensor;

pub const RGA_GROUP: &str = "rga";

#[derive(Debug, Clone, PartialEq)]
pub struct RgaConfig {
    pub noise_mean: f64,
    pub noise_variance: f64,
    /// Run the noisy pass at inference. When off, `S = 0`.
    pub inference_noise: bool,
    pub seed: u64,
}

impl Default for RgaConfig {
    fn default() -> Self {
        Self {
            noise_mean: 0.0,
            noise_variance: 1e-6,
            inference_noise: true,
            seed: 0,
        }
    }
}

impl RgaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::NegativeVariance(self.noise_variance));
        }
        Ok(())
    }
}

/// Which samples the reconstruction loss is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecData {
    Real,
    Fake,
    Both,
}

impl RecData {
    pub fn includes(self, label: Label) -> bool {
        match self {
            Self::Real => label == Label::Real,
            Self::Fake => label == Label::Fake,
            Self::Both => true,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Real => "real",
            Self::Fake => "fake",
            Self::Both => "both",
        }
    }
}

impl FromStr for RecData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" => Ok(Self::Real),
            "fake" => Ok(Self::Fake),
            "both" | "real+fake" | "real&fake" => Ok(Self::Both),
            other => Err(Error::Config(format!("unknown rec data `{other}`"))),
        }
    }
}

/// Adds i.i.d. Gaussian noise to every element and clamps to `[0, 1]`.
pub fn add_white_noise<R: Rng + ?Sized>(images: &Tensor, mean: f64, variance: f64, rng: &mut R) -> Result<Tensor> {
    if !(variance >= 0.0) {
        return Err(Error::NegativeVariance(variance));
    }
    if variance == 0.0 && mean == 0.0 {
        return Ok(images.clone());
    }
    let dist = Normal::new(mean, libm::sqrt(variance)).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = images.clone();
    for v in out.data_mut() {
        *v = (*v + dist.sample(rng)).clamp(0.0, 1.0);
    }
    Ok(out)
}

/// `|f_gau - f|` elementwise.
pub fn feature_difference(f: &FeatureMap, f_gau: &FeatureMap) -> Result<FeatureMap> {
    f.same_shape(f_gau)?;
    let data = f.data().iter().zip(f_gau.data()).map(|(a, b)| (b - a).abs()).collect();
    Tensor::from_vec(f.shape(), data)
}

/// Softmax over the spatial positions of each (sample, channel) pair.
pub fn spatial_softmax(x: &Tensor) -> Tensor {
    let (b, h, w, c) = x.dims4();
    let n = h * w;
    let mut out = x.clone();
    let d = out.data_mut();
    for bi in 0..b {
        let base = bi * n * c;
        for ch in 0..c {
            let mut max = f64::NEG_INFINITY;
            for p in 0..n {
                max = max.max(d[base + p * c + ch]);
            }
            let mut z = 0.0;
            for p in 0..n {
                let e = libm::exp(d[base + p * c + ch] - max);
                d[base + p * c + ch] = e;
                z += e;
            }
            for p in 0..n {
                d[base + p * c + ch] /= z;
            }
        }
    }
    out
}

/// Shared 1x1 enhancer applied to both the difference map and the features.
#[derive(Debug, Clone)]
pub struct Rga {
    pub config: RgaConfig,
    pub enhancer: Linear,
}

#[derive(Debug, Clone)]
pub struct RefineCache {
    phi_s: LinearCache,
    phi_f: LinearCache,
    attention: Tensor,
    enhanced: Tensor,
}

impl RefineCache {
    pub fn attention(&self) -> &Tensor {
        &self.attention
    }
}

impl Rga {
    /// Enhancer starts as identity with zero bias.
    pub fn new(ps: &mut ParamStore, config: RgaConfig, channels: usize) -> Result<Self> {
        config.validate()?;
        let enhancer = Linear::from_weight(
            ps,
            "rga.enhancer",
            RGA_GROUP,
            Role::Trainable,
            identity_matrix(channels),
        );
        Ok(Self { config, enhancer })
    }

    pub fn refine(&self, ps: &ParamStore, f: &FeatureMap, s: &FeatureMap) -> Result<(FeatureMap, RefineCache)> {
        f.same_shape(s)?;
        let (es, phi_s) = self.enhancer.forward(ps, s)?;
        let (ef, phi_f) = self.enhancer.forward(ps, f)?;
        let attention = spatial_softmax(&es);
        let mut out = f.clone();
        for ((o, a), e) in out.data_mut().iter_mut().zip(attention.data()).zip(ef.data()) {
            *o += a * e;
        }
        Ok((
            out,
            RefineCache {
                phi_s,
                phi_f,
                attention,
                enhanced: ef,
            },
        ))
    }

    /// Returns `(dF, dS)`.
    pub fn refine_backward(
        &self,
        ps: &ParamStore,
        grads: &mut Grads,
        cache: &RefineCache,
        g: &FeatureMap,
    ) -> (FeatureMap, FeatureMap) {
        let (b, h, w, c) = g.dims4();
        let n = h * w;
        let att = cache.attention.data();
        let mut d_ef = g.clone();
        let mut d_att = g.clone();
        for i in 0..g.len() {
            d_ef.data_mut()[i] = g.data()[i] * att[i];
            d_att.data_mut()[i] = g.data()[i] * cache.enhanced.data()[i];
        }
        // softmax backward per (sample, channel)
        let mut d_es = d_att;
        {
            let d = d_es.data_mut();
            for bi in 0..b {
                let base = bi * n * c;
                for ch in 0..c {
                    let mut dot = 0.0;
                    for p in 0..n {
                        let k = base + p * c + ch;
                        dot += d[k] * att[k];
                    }
                    for p in 0..n {
                        let k = base + p * c + ch;
                        d[k] = att[k] * (d[k] - dot);
                    }
                }
            }
        }
        let ds = self.enhancer.backward(ps, grads, &cache.phi_s, &d_es, true).unwrap();
        let mut df = self.enhancer.backward(ps, grads, &cache.phi_f, &d_ef, true).unwrap();
        df.add_assign(g);
        (df, ds)
    }
}

/// How the per-sample L1 norm is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RecReduction {
    /// Plain sum of absolute entries.
    Sum,
    /// Sum divided by the number of feature elements per sample.
    Mean,
}

impl RecReduction {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sum => "sum",
            Self::Mean => "mean",
        }
    }
}

impl FromStr for RecReduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            other => Err(Error::Config(format!("unknown rec reduction `{other}`"))),
        }
    }
}

/// Mean over the selected samples of `sum |f_gau - f|`.
///
/// Returns the loss and its gradients with respect to `f` and `f_gau`.
/// Unselected samples contribute nothing to either.
pub fn reconstruction_loss(
    f: &FeatureMap,
    f_gau: &FeatureMap,
    labels: &[Label],
    data: RecData,
) -> Result<(f64, FeatureMap, FeatureMap)> {
    reconstruction_loss_with(f, f_gau, labels, data, RecReduction::Sum)
}

/// [`reconstruction_loss`] with a choice of per-sample scaling.
pub fn reconstruction_loss_with(
    f: &FeatureMap,
    f_gau: &FeatureMap,
    labels: &[Label],
    data: RecData,
    reduction: RecReduction,
) -> Result<(f64, FeatureMap, FeatureMap)> {
    f.same_shape(f_gau)?;
    if labels.is_empty() || f.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let b = f.shape()[0];
    if labels.len() != b {
        return Err(Error::ShapeMismatch {
            left: vec![b],
            right: vec![labels.len()],
        });
    }
    let per = f.len() / b;
    let selected: Vec<bool> = labels.iter().map(|&l| data.includes(l)).collect();
    let m = selected.iter().filter(|&&s| s).count();
    let mut df = Tensor::zeros(f.shape());
    let mut dg = Tensor::zeros(f.shape());
    if m == 0 {
        return Ok((0.0, df, dg));
    }
    let inv_m = match reduction {
        RecReduction::Sum => 1.0 / m as f64,
        RecReduction::Mean => 1.0 / (m * per) as f64,
    };
    let mut loss = 0.0;
    for (bi, _) in selected.iter().enumerate().filter(|(_, &s)| s) {
        let range = bi * per..(bi + 1) * per;
        let mut l1 = 0.0;
        for i in range {
            let d = f_gau.data()[i] - f.data()[i];
            l1 += d.abs();
            let s = if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            };
            dg.data_mut()[i] = s * inv_m;
            df.data_mut()[i] = -s * inv_m;
        }
        loss += l1;
    }
    Ok((loss * inv_m, df, dg))
}

fn weighted_sum(x: &Tensor, head: &Tensor) -> f64 {
    x.data().iter().zip(head.data()).map(|(a, b)| a * b).sum()
}

/// Maximum relative error of the analytic gradients of
/// `sum(head * refine(f, s))` with respect to `f`, `s` and the enhancer.
pub fn refine_gradcheck(rga: &Rga, ps: &mut ParamStore, f: &FeatureMap, s: &FeatureMap, head: &Tensor) -> f64 {
    let mut grads = Grads::new(ps);
    let (_, cache) = rga.refine(ps, f, s).expect("refine");
    let (df, ds) = rga.refine_backward(ps, &mut grads, &cache, head);
    let eval = |ps: &ParamStore, f: &Tensor, s: &Tensor| weighted_sum(&rga.refine(ps, f, s).expect("refine").0, head);
    let step = crate::gradcheck::DEFAULT_STEP;
    let ef = crate::gradcheck::check_input(f, &df, step, |x| eval(ps, x, s));
    let es = crate::gradcheck::check_input(s, &ds, step, |x| eval(ps, f, x));
    let ids = [rga.enhancer.weight, rga.enhancer.bias];
    let ep = crate::gradcheck::check_params(ps, &ids, &grads, step, |ps| eval(ps, f, s));
    ef.max(es).max(ep)
}

/// Maximum relative error of the gradients of the reconstruction loss with
/// respect to both feature maps.
pub fn reconstruction_gradcheck(
    f: &FeatureMap,
    f_gau: &FeatureMap,
    labels: &[Label],
    data: RecData,
    reduction: RecReduction,
) -> f64 {
    let (_, df, dg) = reconstruction_loss_with(f, f_gau, labels, data, reduction).expect("loss");
    let step = crate::gradcheck::DEFAULT_STEP;
    let loss = |a: &Tensor, b: &Tensor| reconstruction_loss_with(a, b, labels, data, reduction).expect("loss").0;
    let ef = crate::gradcheck::check_input(f, &df, step, |x| loss(x, f_gau));
    let eg = crate::gradcheck::check_input(f_gau, &dg, step, |x| loss(f, x));
    ef.max(eg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_example() {
        let f = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, -2.0]).unwrap();
        let g = Tensor::from_vec(&[1, 1, 1, 2], vec![0.5, -1.0]).unwrap();
        assert_eq!(feature_difference(&f, &g).unwrap().data(), &[0.5, 1.0]);
        assert!(feature_difference(&f, &Tensor::zeros(&[1, 1, 2, 2])).is_err());
    }

    #[test]
    fn zero_variance_is_identity_and_negative_rejected() {
        let x = Tensor::filled(&[1, 2, 2, 3], 0.25);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
        assert_eq!(add_white_noise(&x, 0.0, 0.0, &mut rng).unwrap(), x);
        assert!(matches!(
            add_white_noise(&x, 0.0, -1e-6, &mut rng),
            Err(Error::NegativeVariance(_))
        ));
    }

    #[test]
    fn single_position_identity_enhancer_doubles() {
        let mut ps = ParamStore::new();
        let rga = Rga::new(&mut ps, RgaConfig::default(), 3).unwrap();
        let f = Tensor::from_vec(&[1, 1, 1, 3], vec![0.5, -1.0, 2.0]).unwrap();
        let s = Tensor::from_vec(&[1, 1, 1, 3], vec![0.1, 0.2, 0.3]).unwrap();
        let (out, cache) = rga.refine(&ps, &f, &s).unwrap();
        assert!(cache.attention().data().iter().all(|&a| a == 1.0));
        assert_eq!(out.data(), &[1.0, -2.0, 4.0]);
    }

    #[test]
    fn rec_loss_example_and_masking() {
        let f = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let g = Tensor::from_vec(&[1, 1, 1, 2], vec![1.5, 2.5]).unwrap();
        let (l, _, _) = reconstruction_loss(&f, &g, &[Label::Real], RecData::Real).unwrap();
        assert_eq!(l, 1.0);
        let (l, df, dg) = reconstruction_loss(&f, &g, &[Label::Fake], RecData::Real).unwrap();
        assert_eq!(l, 0.0);
        assert!(df.data().iter().chain(dg.data()).all(|&v| v == 0.0));
        assert_eq!(
            reconstruction_loss(
                &Tensor::zeros(&[0, 1, 1, 2]),
                &Tensor::zeros(&[0, 1, 1, 2]),
                &[],
                RecData::Real
            ),
            Err(Error::EmptyBatch)
        );
    }
}
