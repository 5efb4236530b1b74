//! Localization (PBCA, IINC) and detection (ACC, AUC, EER) metrics.
//! Percent-valued metrics are returned in `[0, 100]`.

use alloc::vec;
use alloc::vec::Vec;

use crate::data::Label;
use crate::error::{Error, Result};

fn check_len(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::ShapeMismatch {
            left: vec![a],
            right: vec![b],
        })
    }
}

/// Percentage of pixels where `pred >= threshold` agrees with the binary
/// ground truth.
pub fn pbca(pred: &[f64], gt: &[f64], threshold: f64) -> Result<f64> {
    check_len(pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(&p, &g)| (p >= threshold) == (g >= 0.5))
        .count();
    Ok(100.0 * hits as f64 / pred.len() as f64)
}

/// Inverse intersection non-containment of two binary masks:
/// 0 when both are empty, 1 when exactly one is, otherwise
/// `1 - (|P n G| / |P| + |P n G| / |G|) / 2`.
pub fn iinc(pred: &[bool], gt: &[bool]) -> Result<f64> {
    check_len(pred.len(), gt.len())?;
    let p = pred.iter().filter(|&&v| v).count();
    let g = gt.iter().filter(|&&v| v).count();
    let inter = pred.iter().zip(gt).filter(|(&a, &b)| a && b).count();
    Ok(match (p, g) {
        (0, 0) => 0.0,
        (0, _) | (_, 0) => 1.0,
        _ => 1.0 - 0.5 * (inter as f64 / p as f64 + inter as f64 / g as f64),
    })
}

/// Binarizes probabilities at `threshold`.
pub fn binarize(prob: &[f64], threshold: f64) -> Vec<bool> {
    prob.iter().map(|&p| p >= threshold).collect()
}

/// Accuracy of `sigmoid(score) >= 0.5` (i.e. `score >= 0`) against fake = positive.
pub fn accuracy(scores: &[f64], labels: &[Label]) -> Result<f64> {
    check_len(scores.len(), labels.len())?;
    if scores.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = scores
        .iter()
        .zip(labels)
        .filter(|(&s, &l)| (s >= 0.0) == (l == Label::Fake))
        .count();
    Ok(100.0 * hits as f64 / scores.len() as f64)
}

/// ROC vertices `(fpr, tpr)` from the strictest threshold to the loosest,
/// tied scores collapsed into one step.
pub fn roc_curve(scores: &[f64], labels: &[Label]) -> Result<Vec<(f64, f64)>> {
    check_len(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l == Label::Fake).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == Label::Fake {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(pts)
}

/// Trapezoidal area under the ROC curve, in percent. Ties earn half credit.
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let pts = roc_curve(scores, labels)?;
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) * 0.5)
        .sum();
    Ok(100.0 * area)
}

/// Equal error rate in percent: the point where the false-positive rate
/// meets the false-negative rate, interpolated linearly between vertices.
pub fn eer(scores: &[f64], labels: &[Label]) -> Result<f64> {
    let pts = roc_curve(scores, labels)?;
    // fpr - fnr = fpr + tpr - 1 is non-decreasing along the curve
    for w in pts.windows(2) {
        let d0 = w[0].0 + w[0].1 - 1.0;
        let d1 = w[1].0 + w[1].1 - 1.0;
        if d0 <= 0.0 && d1 >= 0.0 {
            let t = if d1 > d0 { -d0 / (d1 - d0) } else { 0.0 };
            return Ok(100.0 * (w[0].0 + t * (w[1].0 - w[0].0)));
        }
    }
    unreachable!("ROC runs from (0,0) to (1,1)")
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMetrics {
    pub acc: f64,
    /// `Err(SingleClass)` when only one label is present.
    pub auc: Result<f64>,
    pub eer: Result<f64>,
}

pub fn detection_metrics(scores: &[f64], labels: &[Label]) -> Result<DetectionMetrics> {
    Ok(DetectionMetrics {
        acc: accuracy(scores, labels)?,
        auc: auc(scores, labels),
        eer: eer(scores, labels),
    })
}

/// Summary for one model on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub pbca: f64,
    pub iinc: f64,
    pub acc: f64,
    pub auc: Option<f64>,
    pub eer: Option<f64>,
    pub trainable_fraction: f64,
}

impl MetricsReport {
    /// Field names in emission order.
    pub const FIELDS: [&'static str; 6] = ["pbca", "iinc", "acc", "auc", "eer", "trainable_fraction"];

    pub fn validate(&self) -> Result<()> {
        let pct = |v: f64| (0.0..=100.0).contains(&v);
        let ok = pct(self.pbca)
            && (0.0..=1.0).contains(&self.iinc)
            && pct(self.acc)
            && self.auc.map_or(true, pct)
            && self.eer.map_or(true, pct)
            && pct(self.trainable_fraction);
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfRange("metrics report"))
        }
    }
}

/// Accumulates per-image localization scores and per-sample detection scores.
#[derive(Debug, Clone, Default)]
pub struct MetricsAccumulator {
    pbca: Vec<f64>,
    iinc: Vec<f64>,
    scores: Vec<f64>,
    labels: Vec<Label>,
}

impl MetricsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, mask_prob: &[f64], gt: &[f64], score: f64, label: Label) -> Result<()> {
        self.pbca.push(pbca(mask_prob, gt, 0.5)?);
        let gtb: Vec<bool> = gt.iter().map(|&g| g >= 0.5).collect();
        self.iinc.push(iinc(&binarize(mask_prob, 0.5), &gtb)?);
        self.scores.push(score);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn report(&self, trainable_fraction: f64) -> Result<MetricsReport> {
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.len() as f64;
        let det = detection_metrics(&self.scores, &self.labels)?;
        Ok(MetricsReport {
            pbca: self.pbca.iter().sum::<f64>() / n,
            iinc: self.iinc.iter().sum::<f64>() / n,
            acc: det.acc,
            auc: det.auc.ok(),
            eer: det.eer.ok(),
            trainable_fraction,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Fake, Real};

    #[test]
    fn pbca_extremes() {
        let gt = [0.0, 1.0, 1.0, 0.0];
        assert_eq!(pbca(&[0.1, 0.9, 0.8, 0.2], &gt, 0.5).unwrap(), 100.0);
        assert_eq!(pbca(&[0.9, 0.1, 0.2, 0.8], &gt, 0.5).unwrap(), 0.0);
        assert!(pbca(&[0.1], &gt, 0.5).is_err());
    }

    #[test]
    fn iinc_pinned_cases() {
        let a = [true, true, false, false];
        assert_eq!(iinc(&a, &a).unwrap(), 0.0);
        assert_eq!(iinc(&a, &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(iinc(&[false; 4], &[false; 4]).unwrap(), 0.0);
        assert_eq!(iinc(&[false; 4], &a).unwrap(), 1.0);
        assert_eq!(iinc(&a, &[false, true, true, false]).unwrap(), 0.5);
    }

    #[test]
    fn separated_and_inverted_scores() {
        let labels = [Real, Real, Fake, Fake];
        let s = [-2.0, -1.0, 1.0, 3.0];
        let m = detection_metrics(&s, &labels).unwrap();
        assert_eq!(m.acc, 100.0);
        assert_eq!(m.auc.unwrap(), 100.0);
        assert_eq!(m.eer.unwrap(), 0.0);
        let inv: Vec<f64> = s.iter().map(|v| -v).collect();
        assert_eq!(auc(&inv, &labels).unwrap(), 0.0);
        assert_eq!(eer(&inv, &labels).unwrap(), 100.0);
    }

    #[test]
    fn single_class_keeps_accuracy() {
        let m = detection_metrics(&[0.3, -0.2], &[Fake, Fake]).unwrap();
        assert_eq!(m.acc, 50.0);
        assert_eq!(m.auc, Err(Error::SingleClass));
        assert_eq!(m.eer, Err(Error::SingleClass));
    }

    #[test]
    fn all_tied_scores_give_half_auc() {
        let labels = [Real, Fake, Real, Fake];
        assert_eq!(auc(&[0.0; 4], &labels).unwrap(), 50.0);
        assert_eq!(eer(&[0.0; 4], &labels).unwrap(), 50.0);
    }
}
