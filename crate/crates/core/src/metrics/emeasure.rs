use super::{threshold_counts, EvalPair, ThresholdCounts, EPS, THRESHOLDS};

#[derive(Debug, Clone, PartialEq)]
pub struct EMeasure {
    pub max: f64,
    pub mean: f64,
    /// Score at every threshold.
    pub curve: Vec<f64>,
}

/// Enhanced-alignment score at every threshold.
///
/// Each pixel takes one of four `(M, G)` combinations, so the per-pixel
/// enhanced alignment is evaluated once per combination and weighted by its
/// count.
pub fn e_measure(pair: &EvalPair) -> EMeasure {
    let counts = threshold_counts(pair);
    let n = pair.pred().len();
    let curve: Vec<f64> = (0..THRESHOLDS).map(|t| e_at(&counts, t, n)).collect();
    let max = curve.iter().copied().fold(0.0, f64::max);
    let mean = curve.iter().sum::<f64>() / THRESHOLDS as f64;
    EMeasure { max, mean, curve }
}

fn e_at(counts: &ThresholdCounts, t: usize, n: usize) -> f64 {
    let g1 = counts.positives;
    let m1 = counts.predicted[t];
    let tp = counts.true_positive[t];
    let nf = n as f64;
    // pixel counts for (m, g) = (1,1), (1,0), (0,1), (0,0)
    let combos = [(1.0, 1.0, tp), (1.0, 0.0, m1 - tp), (0.0, 1.0, g1 - tp), (0.0, 0.0, n + tp - m1 - g1)];
    if g1 == 0 || g1 == n {
        // constant ground truth: fraction of pixels that agree with it
        let agree: usize = combos.iter().filter(|(m, g, _)| m == g).map(|c| c.2).sum();
        return agree as f64 / nf;
    }
    let mu_g = g1 as f64 / nf;
    let mu_m = m1 as f64 / nf;
    let total: f64 = combos
        .iter()
        .filter(|c| c.2 > 0)
        .map(|&(m, g, k)| {
            let fm = m - mu_m;
            let fg = g - mu_g;
            let align = 2.0 * fg * fm / (fg * fg + fm * fm + EPS);
            k as f64 * (align + 1.0) * (align + 1.0) / 4.0
        })
        .sum();
    total / nf
}
