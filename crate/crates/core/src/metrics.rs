//! Pixelwise binary segmentation metrics.

use std::fmt;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

/// Default probability threshold; a pixel is positive when `P >= 0.5`.
pub const THRESHOLD: f64 = 0.5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Counts over two binary masks of equal shape.
    pub fn from_masks<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<Self> {
        if pred.shape() != truth.shape() {
            return Err(Error::Dimension(format!(
                "prediction {:?} and truth {:?} differ in shape",
                pred.shape(),
                truth.shape()
            )));
        }
        let bit = |v: T, which: &str| {
            if v == T::zero() {
                Ok(false)
            } else if v == T::one() {
                Ok(true)
            } else {
                Err(Error::Label(format!("{which} mask value {v} is not 0 or 1")))
            }
        };
        let mut c = ConfusionCounts::default();
        for (&p, &t) in pred.data().iter().zip(truth.data()) {
            match (bit(p, "prediction")?, bit(t, "truth")?) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }
}

impl Add for ConfusionCounts {
    type Output = ConfusionCounts;

    fn add(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: ConfusionCounts) {
        *self = *self + o;
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ConfusionCounts::default(), Add::add)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(flatten)]
    pub counts: ConfusionCounts,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    /// Both masks empty counts as perfect agreement; if only one is empty the
    /// ratios it affects are 0.
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let ConfusionCounts { tp, fp, fn_, .. } = counts;
        if tp + fp + fn_ == 0 {
            return MetricsReport {
                iou: 1.0,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                counts,
            };
        }
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        MetricsReport {
            iou: ratio(tp, tp + fp + fn_),
            precision,
            recall,
            f1,
            counts,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let c = &self.counts;
        format!(
            "{:<10} {:>10}\n{:<10} {:>10.6}\n{:<10} {:>10.6}\n{:<10} {:>10.6}\n{:<10} {:>10.6}\n{:<10} {:>10}\n{:<10} {:>10}\n{:<10} {:>10}\n{:<10} {:>10}\n",
            "metric", "value", "iou", self.iou, "precision", self.precision, "recall", self.recall, "f1", self.f1,
            "tp", c.tp, "fp", c.fp, "fn", c.fn_, "tn", c.tn
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "iou {:.6} precision {:.6} recall {:.6} f1 {:.6}",
            self.iou, self.precision, self.recall, self.f1
        )
    }
}

/// `1` where the heterogeneity probability is at least `threshold`.
pub fn binarize<T: Scalar>(probability: &Tensor<T>, threshold: f64) -> Tensor<T> {
    let t = T::from_f64(threshold);
    probability.map(|p| if p >= t { T::one() } else { T::zero() })
}

/// Binarizes channel 1 of a softmaxed `[2 x H x W]` map.
pub fn binarize_two_channel<T: Scalar>(map: &Tensor<T>, threshold: f64) -> Result<Tensor<T>> {
    let s = map.shape();
    if s.len() != 3 || s[0] != 2 {
        return Err(Error::Dimension(format!("expected a [2 x H x W] map, got {s:?}")));
    }
    Ok(binarize(&map.slice_first(1), threshold))
}

pub fn evaluate<T: Scalar>(pred: &Tensor<T>, truth: &Tensor<T>) -> Result<MetricsReport> {
    Ok(MetricsReport::from_counts(ConfusionCounts::from_masks(pred, truth)?))
}

/// Micro-averaged report over many mask pairs.
pub fn evaluate_all<'a, T: Scalar>(
    pairs: impl IntoIterator<Item = (&'a Tensor<T>, &'a Tensor<T>)>,
) -> Result<MetricsReport> {
    let mut total = ConfusionCounts::default();
    for (p, t) in pairs {
        total += ConfusionCounts::from_masks(p, t)?;
    }
    Ok(MetricsReport::from_counts(total))
}
