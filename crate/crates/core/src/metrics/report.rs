use serde::{Deserialize, Serialize};

use super::{e_measure, mae, s_measure, threshold_counts, EvalPair, MetricsError, ALPHA, BETA2, THRESHOLDS};

/// Which E-measure summary is reported as `e_measure`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EVariant {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub beta2: f64,
    pub alpha: f64,
    pub e_variant: EVariant,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { beta2: BETA2, alpha: ALPHA, e_variant: EVariant::Max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub name: String,
    pub s_measure: f64,
    /// Absent when the ground truth has no foreground.
    pub f_max: Option<f64>,
    pub e_measure: f64,
    pub mae: f64,
}

/// Per-image scores plus the curves needed for aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEvaluation {
    pub metrics: ImageMetrics,
    pub precision: Option<Vec<f64>>,
    pub recall: Option<Vec<f64>>,
    pub f_curve: Option<Vec<f64>>,
}

pub fn evaluate_image(name: &str, pair: &EvalPair, opts: &EvalOptions) -> ImageEvaluation {
    let e = e_measure(pair);
    let curves = threshold_counts(pair).pr_curve().ok().map(|pr| {
        let f = pr.f_measure(opts.beta2);
        (pr, f)
    });
    let metrics = ImageMetrics {
        name: name.to_string(),
        s_measure: s_measure(pair, opts.alpha),
        f_max: curves.as_ref().map(|(_, f)| f.max),
        e_measure: match opts.e_variant {
            EVariant::Max => e.max,
            EVariant::Mean => e.mean,
        },
        mae: mae(pair),
    };
    match curves {
        Some((pr, f)) => ImageEvaluation {
            metrics,
            precision: Some(pr.precision),
            recall: Some(pr.recall),
            f_curve: Some(f.curve),
        },
        None => ImageEvaluation { metrics, precision: None, recall: None, f_curve: None },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub s_measure: f64,
    pub f_max: f64,
    pub e_measure: f64,
    pub mae: f64,
    /// Maximum of the mean F curve.
    pub curve_f_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub e_variant: EVariant,
    pub images: Vec<ImageMetrics>,
    pub mean: Aggregate,
    /// Mean precision per threshold over images with foreground.
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f_curve: Vec<f64>,
    /// Images left out of the F and PR means for lacking foreground.
    pub skipped: usize,
}

fn mean_of(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

fn mean_curve<'a>(curves: impl Iterator<Item = &'a Vec<f64>>) -> Vec<f64> {
    let mut acc = vec![0.0; THRESHOLDS];
    let mut n = 0usize;
    for c in curves {
        for (a, v) in acc.iter_mut().zip(c) {
            *a += v;
        }
        n += 1;
    }
    acc.iter().map(|a| a / n as f64).collect()
}

/// Reduces per-image evaluations into a report. Images are ordered by name
/// first, so the result does not depend on input order.
pub fn aggregate(mut evals: Vec<ImageEvaluation>, e_variant: EVariant) -> Result<MetricsReport, MetricsError> {
    if evals.is_empty() {
        return Err(MetricsError::NoEvaluablePairs);
    }
    evals.sort_by(|a, b| a.metrics.name.cmp(&b.metrics.name));
    let with_fg: Vec<&ImageEvaluation> = evals.iter().filter(|e| e.f_curve.is_some()).collect();
    if with_fg.is_empty() {
        return Err(MetricsError::NoEvaluablePairs);
    }
    let f_curve = mean_curve(with_fg.iter().filter_map(|e| e.f_curve.as_ref()));
    let mean = Aggregate {
        s_measure: mean_of(evals.iter().map(|e| e.metrics.s_measure)),
        f_max: mean_of(with_fg.iter().filter_map(|e| e.metrics.f_max)),
        e_measure: mean_of(evals.iter().map(|e| e.metrics.e_measure)),
        mae: mean_of(evals.iter().map(|e| e.metrics.mae)),
        curve_f_max: f_curve.iter().copied().fold(0.0, f64::max),
    };
    Ok(MetricsReport {
        e_variant,
        precision: mean_curve(with_fg.iter().filter_map(|e| e.precision.as_ref())),
        recall: mean_curve(with_fg.iter().filter_map(|e| e.recall.as_ref())),
        f_curve,
        skipped: evals.len() - with_fg.len(),
        images: evals.into_iter().map(|e| e.metrics).collect(),
        mean,
    })
}

pub fn evaluate_dataset<I, S>(pairs: I, opts: &EvalOptions) -> Result<MetricsReport, MetricsError>
where
    I: IntoIterator<Item = (S, EvalPair)>,
    S: AsRef<str>,
{
    let evals = pairs.into_iter().map(|(name, pair)| evaluate_image(name.as_ref(), &pair, opts)).collect();
    aggregate(evals, opts.e_variant)
}
