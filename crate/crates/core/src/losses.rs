//! Segmentation, classification and combined objectives. Each loss returns
//! its value together with the gradient with respect to its logits.

use alloc::format;
use alloc::vec::Vec;
use core::str::FromStr;

use crate::data::Label;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Numerically stable `BCE(sigmoid(z), y)`.
pub fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegLoss {
    Bce,
    BceDice,
}

impl FromStr for SegLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bce" => Ok(Self::Bce),
            "bce+dice" => Ok(Self::BceDice),
            other => Err(Error::Config(format!("unknown seg loss `{other}`"))),
        }
    }
}

impl SegLoss {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Bce => "bce",
            Self::BceDice => "bce+dice",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    /// Weight of the reconstruction loss.
    pub lambda1: f64,
    /// Weight of the classification loss.
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.1,
            lambda2: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda1 >= 0.0 && self.lambda2 >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "loss weights must be non-negative, got {} and {}",
                self.lambda1, self.lambda2
            )))
        }
    }
}

/// Mean per-pixel BCE, averaged over pixels then over the batch.
pub fn seg_loss(logits: &Tensor, gt: &Tensor) -> Result<(f64, Tensor)> {
    logits.same_shape(gt)?;
    if gt.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::NonBinary);
    }
    let n = logits.len();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for ((g, &z), &y) in grad.data_mut().iter_mut().zip(logits.data()).zip(gt.data()) {
        loss += bce_with_logits(z, y);
        *g = (sigmoid(z) - y) * inv;
    }
    Ok((loss * inv, grad))
}

/// Soft Dice loss `1 - (2 sum(p g) + 1) / (sum p + sum g + 1)`, averaged over
/// the batch.
pub fn dice_loss(logits: &Tensor, gt: &Tensor) -> Result<(f64, Tensor)> {
    logits.same_shape(gt)?;
    let b = logits.shape()[0];
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let per = logits.len() / b;
    let mut grad = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    for bi in 0..b {
        let r = bi * per..(bi + 1) * per;
        let p: Vec<f64> = logits.data()[r.clone()].iter().map(|&z| sigmoid(z)).collect();
        let g = &gt.data()[r.clone()];
        let inter: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        let denom = p.iter().sum::<f64>() + g.iter().sum::<f64>() + 1.0;
        let num = 2.0 * inter + 1.0;
        total += 1.0 - num / denom;
        for (i, k) in r.enumerate() {
            let dp = -(2.0 * g[i] * denom - num) / (denom * denom);
            grad.data_mut()[k] = dp * p[i] * (1.0 - p[i]) / b as f64;
        }
    }
    Ok((total / b as f64, grad))
}

/// Mean BCE over per-sample logits.
pub fn cls_loss(logits: &[f64], labels: &[Label]) -> Result<(f64, Vec<f64>)> {
    if logits.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch {
            left: alloc::vec![logits.len()],
            right: alloc::vec![labels.len()],
        });
    }
    let inv = 1.0 / logits.len() as f64;
    let mut loss = 0.0;
    let grad = logits
        .iter()
        .zip(labels)
        .map(|(&z, &l)| {
            let y = l.target();
            loss += bce_with_logits(z, y);
            (sigmoid(z) - y) * inv
        })
        .collect();
    Ok((loss * inv, grad))
}

pub fn overall_loss(seg: f64, rec: f64, cls: f64, weights: LossWeights) -> f64 {
    seg + weights.lambda1 * rec + weights.lambda2 * cls
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::LN_2;

    #[test]
    fn zero_logits_give_ln2() {
        let z = Tensor::zeros(&[1, 2, 2, 1]);
        let gt = Tensor::from_vec(&[1, 2, 2, 1], alloc::vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((seg_loss(&z, &gt).unwrap().0 - LN_2).abs() < 1e-15);
        for l in [Label::Real, Label::Fake] {
            assert!((cls_loss(&[0.0], &[l]).unwrap().0 - LN_2).abs() < 1e-15);
        }
    }

    #[test]
    fn saturation_and_errors() {
        let z = Tensor::from_vec(&[1, 1, 2, 1], alloc::vec![40.0, -40.0]).unwrap();
        let gt = Tensor::from_vec(&[1, 1, 2, 1], alloc::vec![1.0, 0.0]).unwrap();
        assert!(seg_loss(&z, &gt).unwrap().0 < 1e-15);
        assert!(cls_loss(&[40.0], &[Label::Fake]).unwrap().0 < 1e-15);
        let bad = Tensor::from_vec(&[1, 1, 2, 1], alloc::vec![0.5, 0.0]).unwrap();
        assert_eq!(seg_loss(&z, &bad), Err(Error::NonBinary));
        assert!(seg_loss(&z, &Tensor::zeros(&[1, 2, 1, 1])).is_err());
    }

    #[test]
    fn overall_combination() {
        assert_eq!(
            overall_loss(1.0, 2.0, 3.0, LossWeights::default()),
            1.0 + 0.1 * 2.0 + 0.1 * 3.0
        );
        let w = LossWeights {
            lambda1: 0.0,
            lambda2: 0.0,
        };
        assert_eq!(overall_loss(0.7, 5.0, 9.0, w), 0.7);
        assert!(LossWeights {
            lambda1: -0.1,
            lambda2: 0.1
        }
        .validate()
        .is_err());
    }
}
