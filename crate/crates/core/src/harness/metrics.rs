//! Binary metrics. Label 0 is the vessel class (V.), label 1 the aneurysm
//! class (A.), which is also the positive class for F1.

use crate::error::{Error, Result};

/// Counts with aneurysm (1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(predictions: &[u8], targets: &[u8]) -> Result<Self> {
        if predictions.len() != targets.len() {
            return Err(Error::invalid_argument(format!(
                "{} predictions for {} targets",
                predictions.len(),
                targets.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &t) in predictions.iter().zip(targets) {
            if p > 1 || t > 1 {
                return Err(Error::invalid_argument(format!("labels must be binary, got {p} and {t}")));
            }
            match (p, t) {
                (1, 1) => c.tp += 1,
                (1, 0) => c.fp += 1,
                (0, 1) => c.fn_ += 1,
                _ => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    /// Per-class accuracy (recall); `None` when the class is absent.
    pub accuracy_v: Option<f64>,
    pub accuracy_a: Option<f64>,
    /// Zero when precision + recall is zero.
    pub f1: f64,
}

impl ClassificationMetrics {
    pub fn from_confusion(c: &Confusion) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp).unwrap_or(0.0);
        let recall = ratio(c.tp, c.tp + c.fn_).unwrap_or(0.0);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { accuracy_v: ratio(c.tn, c.tn + c.fp), accuracy_a: ratio(c.tp, c.tp + c.fn_), f1 }
    }
}

pub fn metrics_classification(predictions: &[u8], targets: &[u8]) -> Result<ClassificationMetrics> {
    Ok(ClassificationMetrics::from_confusion(&Confusion::from_labels(predictions, targets)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentationMetrics {
    /// Indexed by class; `None` when the class is absent from both masks.
    pub iou: [Option<f64>; 2],
    pub dsc: [Option<f64>; 2],
}

impl SegmentationMetrics {
    pub fn from_confusion(c: &Confusion) -> Self {
        // class 1: intersection tp, |P| = tp + fp, |T| = tp + fn; class 0 mirrors with tn
        let per = |inter: usize, p: usize, t: usize| (ratio(inter, p + t - inter), ratio(2 * inter, p + t));
        let (iou1, dsc1) = per(c.tp, c.tp + c.fp, c.tp + c.fn_);
        let (iou0, dsc0) = per(c.tn, c.tn + c.fn_, c.tn + c.fp);
        Self { iou: [iou0, iou1], dsc: [dsc0, dsc1] }
    }
}

/// Micro-averaged over all points of all objects.
pub fn metrics_segmentation(objects: &[(&[u8], &[u8])]) -> Result<SegmentationMetrics> {
    let mut total = Confusion::default();
    for (p, t) in objects {
        total.add(&Confusion::from_labels(p, t)?);
    }
    Ok(SegmentationMetrics::from_confusion(&total))
}

/// Per-object metrics averaged over the objects where each value is defined.
pub fn metrics_segmentation_macro(objects: &[(&[u8], &[u8])]) -> Result<SegmentationMetrics> {
    let per: Vec<SegmentationMetrics> = objects
        .iter()
        .map(|(p, t)| Confusion::from_labels(p, t).map(|c| SegmentationMetrics::from_confusion(&c)))
        .collect::<Result<_>>()?;
    let mean = |f: &dyn Fn(&SegmentationMetrics) -> Option<f64>| {
        let vals: Vec<f64> = per.iter().filter_map(f).collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    };
    Ok(SegmentationMetrics {
        iou: [mean(&|m| m.iou[0]), mean(&|m| m.iou[1])],
        dsc: [mean(&|m| m.dsc[0]), mean(&|m| m.dsc[1])],
    })
}
