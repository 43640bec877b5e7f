use super::{threshold_level, EvalPair, MetricsError, THRESHOLDS};

/// Default `beta^2`, weighting precision over recall.
pub const BETA2: f64 = 0.3;

/// Confusion counts of the binarized prediction at every threshold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdCounts {
    /// `|M_t ∩ G|`.
    pub true_positive: Vec<usize>,
    /// `|M_t|`.
    pub predicted: Vec<usize>,
    /// `|G|`.
    pub positives: usize,
}

pub fn threshold_counts(pair: &EvalPair) -> ThresholdCounts {
    let mut fg_hist = [0usize; THRESHOLDS];
    let mut all_hist = [0usize; THRESHOLDS];
    for (&p, &g) in pair.pred().data().iter().zip(pair.gt().data()) {
        let level = threshold_level(p);
        all_hist[level] += 1;
        if g == 1.0 {
            fg_hist[level] += 1;
        }
    }
    // M_t holds every pixel whose level is >= t: suffix sums
    let mut true_positive = vec![0; THRESHOLDS];
    let mut predicted = vec![0; THRESHOLDS];
    let (mut tp, mut pr) = (0, 0);
    for t in (0..THRESHOLDS).rev() {
        tp += fg_hist[t];
        pr += all_hist[t];
        true_positive[t] = tp;
        predicted[t] = pr;
    }
    ThresholdCounts { true_positive, predicted, positives: pair.gt_foreground() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    /// Indexed by threshold; 0 where the binarized map is empty.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
}

impl ThresholdCounts {
    pub fn pr_curve(&self) -> Result<PrCurve, MetricsError> {
        if self.positives == 0 {
            return Err(MetricsError::EmptyGroundTruth);
        }
        let precision = self
            .true_positive
            .iter()
            .zip(&self.predicted)
            .map(|(&tp, &m)| if m == 0 { 0.0 } else { tp as f64 / m as f64 })
            .collect();
        let recall = self.true_positive.iter().map(|&tp| tp as f64 / self.positives as f64).collect();
        Ok(PrCurve { precision, recall })
    }
}

pub fn pr_curve(pair: &EvalPair) -> Result<PrCurve, MetricsError> {
    threshold_counts(pair).pr_curve()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FMeasure {
    pub max: f64,
    /// `F_t` for every threshold.
    pub curve: Vec<f64>,
}

/// `F_t = (1 + b2) P R / (b2 P + R)`, 0 where the denominator vanishes.
pub fn f_from_pr(precision: f64, recall: f64, beta2: f64) -> f64 {
    let denom = beta2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + beta2) * precision * recall / denom
    }
}

impl PrCurve {
    pub fn f_measure(&self, beta2: f64) -> FMeasure {
        let curve: Vec<f64> = self.precision.iter().zip(&self.recall).map(|(&p, &r)| f_from_pr(p, r, beta2)).collect();
        let max = curve.iter().copied().fold(0.0, f64::max);
        FMeasure { max, curve }
    }
}

pub fn f_measure(pair: &EvalPair, beta2: f64) -> Result<FMeasure, MetricsError> {
    Ok(pr_curve(pair)?.f_measure(beta2))
}

pub fn f_measure_max(pair: &EvalPair) -> Result<FMeasure, MetricsError> {
    f_measure(pair, BETA2)
}
