//! Direct-enumeration references for the threshold metrics.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<f64> {
    loop {
        let m: Vec<f64> = (0..h * w).map(|_| if rng.gen_bool(0.35) { 1.0 } else { 0.0 }).collect();
        let fg = m.iter().filter(|&&v| v == 1.0).count();
        if fg > 0 && fg < m.len() {
            return m;
        }
    }
}

pub fn random_pred(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect()
}

/// Direct enumeration: binarize at every threshold and count.
pub fn brute_force_pr(pred: &[f64], gt: &[f64]) -> Vec<(f64, f64)> {
    (0..256)
        .map(|t| {
            let (mut tp, mut m, mut g) = (0usize, 0usize, 0usize);
            for (&p, &gv) in pred.iter().zip(gt) {
                let on = p * 255.0 >= t as f64;
                m += on as usize;
                g += (gv == 1.0) as usize;
                tp += (on && gv == 1.0) as usize;
            }
            let precision = if m == 0 { 0.0 } else { tp as f64 / m as f64 };
            (precision, tp as f64 / g as f64)
        })
        .collect()
}

pub fn brute_force_f_max(pred: &[f64], gt: &[f64], beta2: f64) -> f64 {
    brute_force_pr(pred, gt)
        .into_iter()
        .map(|(p, r)| if beta2 * p + r == 0.0 { 0.0 } else { (1.0 + beta2) * p * r / (beta2 * p + r) })
        .fold(0.0, f64::max)
}

pub fn scalar_e_curve(pred: &[f64], gt: &[f64]) -> Vec<f64> {
    let n = pred.len() as f64;
    let gsum: f64 = gt.iter().sum();
    (0..256)
        .map(|t| {
            let m: Vec<f64> = pred.iter().map(|&p| if p * 255.0 >= t as f64 { 1.0 } else { 0.0 }).collect();
            if gsum == 0.0 {
                return m.iter().map(|v| 1.0 - v).sum::<f64>() / n;
            }
            if gsum == n {
                return m.iter().sum::<f64>() / n;
            }
            let mu_m = m.iter().sum::<f64>() / n;
            let mu_g = gsum / n;
            let mut s = 0.0;
            for i in 0..pred.len() {
                let a = m[i] - mu_m;
                let b = gt[i] - mu_g;
                let xi = 2.0 * a * b / (a * a + b * b + f64::EPSILON);
                s += (xi + 1.0).powi(2) / 4.0;
            }
            s / n
        })
        .collect()
}
