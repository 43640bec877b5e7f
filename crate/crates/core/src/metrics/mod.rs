//! Saliency evaluation measures: MAE, PR curve, max F-measure, S-measure and
//! E-measure, plus dataset-level aggregation.
//!
//! A prediction is binarized at threshold `t` in `0..=255` as
//! `pred * 255 >= t`, so `t = 0` is always the all-foreground map.

mod emeasure;
mod pr;
mod report;
mod smeasure;

pub use emeasure::{e_measure, EMeasure};
pub use pr::{f_measure, f_measure_max, pr_curve, threshold_counts, FMeasure, PrCurve, ThresholdCounts, BETA2};
pub use report::{
    aggregate, evaluate_dataset, evaluate_image, Aggregate, EVariant, EvalOptions, ImageEvaluation, ImageMetrics,
    MetricsReport,
};
pub use smeasure::{s_measure, ALPHA};

use thiserror::Error;

use crate::map::GrayMap;

pub const THRESHOLDS: usize = 256;

/// Matlab's `eps`, used by the reference measure implementations.
pub(crate) const EPS: f64 = f64::EPSILON;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("prediction is {pred:?} but ground truth is {gt:?}")]
    DimensionMismatch { pred: (usize, usize), gt: (usize, usize) },
    #[error("prediction value {0} outside [0, 1]")]
    PredictionRange(f64),
    #[error("ground truth value {0} is not binary")]
    NonBinaryGroundTruth(f64),
    #[error("ground truth has no foreground pixels")]
    EmptyGroundTruth,
    #[error("empty map")]
    EmptyMap,
    #[error("no evaluable pairs")]
    NoEvaluablePairs,
}

/// A continuous prediction in `[0, 1]` and a binary ground truth of equal
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalPair {
    pred: GrayMap,
    gt: GrayMap,
}

impl EvalPair {
    pub fn new(pred: GrayMap, gt: GrayMap) -> Result<Self, MetricsError> {
        if pred.dims() != gt.dims() {
            return Err(MetricsError::DimensionMismatch { pred: pred.dims(), gt: gt.dims() });
        }
        if pred.is_empty() {
            return Err(MetricsError::EmptyMap);
        }
        if let Some(&v) = pred.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::PredictionRange(v));
        }
        if let Some(&v) = gt.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(MetricsError::NonBinaryGroundTruth(v));
        }
        Ok(EvalPair { pred, gt })
    }

    /// Like [`EvalPair::new`], but first resizes the prediction (bilinear) to
    /// the ground-truth dimensions.
    pub fn aligned(pred: GrayMap, gt: GrayMap) -> Result<Self, MetricsError> {
        let pred = if pred.dims() != gt.dims() && !gt.is_empty() {
            pred.resize_bilinear(gt.height(), gt.width()).map(|v| v.clamp(0.0, 1.0))
        } else {
            pred
        };
        Self::new(pred, gt)
    }

    pub fn pred(&self) -> &GrayMap {
        &self.pred
    }

    pub fn gt(&self) -> &GrayMap {
        &self.gt
    }

    pub fn gt_foreground(&self) -> usize {
        self.gt.data().iter().filter(|&&v| v == 1.0).count()
    }
}

/// Highest threshold at which a prediction value is still foreground:
/// `floor(p * 255)`, with products within 1e-9 of an integer snapped to it so
/// that maps decoded from 8-bit files binarize on their exact grey levels.
pub fn threshold_level(p: f64) -> usize {
    let scaled = p * 255.0;
    let r = scaled.round();
    let v = if (scaled - r).abs() < 1e-9 { r } else { scaled.floor() };
    v.clamp(0.0, 255.0) as usize
}

/// Mean absolute error.
pub fn mae(pair: &EvalPair) -> f64 {
    let n = pair.pred.len() as f64;
    pair.pred.data().iter().zip(pair.gt.data()).map(|(p, g)| (p - g).abs()).sum::<f64>() / n
}
