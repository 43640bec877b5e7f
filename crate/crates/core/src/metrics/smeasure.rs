use super::{EvalPair, EPS};

/// Default weight of the object-aware term.
pub const ALPHA: f64 = 0.5;

/// Structure measure `alpha * S_o + (1 - alpha) * S_r`, clamped to `[0, 1]`.
///
/// An all-background ground truth scores `1 - mean(pred)` and an
/// all-foreground one scores `mean(pred)`.
pub fn s_measure(pair: &EvalPair, alpha: f64) -> f64 {
    let pred = pair.pred().data();
    let gt = pair.gt().data();
    let y = mean(gt);
    let q = if y == 0.0 {
        1.0 - mean(pred)
    } else if y == 1.0 {
        mean(pred)
    } else {
        let (h, w) = pair.gt().dims();
        alpha * s_object(pred, gt) + (1.0 - alpha) * s_region(pred, gt, h, w)
    };
    q.clamp(0.0, 1.0)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation; 0 for fewer than two values.
fn std_sample(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn object_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let x = mean(values);
    let sigma = std_sample(values);
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

fn s_object(pred: &[f64], gt: &[f64]) -> f64 {
    let fg: Vec<f64> = pred.iter().zip(gt).filter(|(_, &g)| g == 1.0).map(|(&p, _)| p).collect();
    let bg: Vec<f64> = pred.iter().zip(gt).filter(|(_, &g)| g != 1.0).map(|(&p, _)| 1.0 - p).collect();
    let u = mean(gt);
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

/// Ground-truth centroid as 1-based (column, row), rounded half away from zero.
fn centroid(gt: &[f64], h: usize, w: usize) -> (usize, usize) {
    let total: f64 = gt.iter().sum();
    if total == 0.0 {
        return ((w as f64 / 2.0).round() as usize, (h as f64 / 2.0).round() as usize);
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for r in 0..h {
        for c in 0..w {
            let g = gt[r * w + c];
            sx += g * (c + 1) as f64;
            sy += g * (r + 1) as f64;
        }
    }
    ((sx / total).round() as usize, (sy / total).round() as usize)
}

fn block(data: &[f64], w: usize, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
    rows.flat_map(|r| cols.clone().map(move |c| (r, c))).map(|(r, c)| data[r * w + c]).collect()
}

fn ssim(pred: &[f64], gt: &[f64]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    let n = pred.len() as f64;
    let x = mean(pred);
    let y = mean(gt);
    let denom = n - 1.0 + EPS;
    let sigma_x2 = pred.iter().map(|p| (p - x) * (p - x)).sum::<f64>() / denom;
    let sigma_y2 = gt.iter().map(|g| (g - y) * (g - y)).sum::<f64>() / denom;
    let sigma_xy = pred.iter().zip(gt).map(|(p, g)| (p - x) * (g - y)).sum::<f64>() / denom;
    let a = 4.0 * x * y * sigma_xy;
    let b = (x * x + y * y) * (sigma_x2 + sigma_y2);
    if a != 0.0 {
        a / (b + EPS)
    } else if b == 0.0 {
        1.0
    } else {
        0.0
    }
}

fn s_region(pred: &[f64], gt: &[f64], h: usize, w: usize) -> f64 {
    let (x, y) = centroid(gt, h, w);
    let area = (h * w) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((w - x) * y) as f64 / area;
    let w3 = (x * (h - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    let quads = [(0..y, 0..x), (0..y, x..w), (y..h, 0..x), (y..h, x..w)];
    quads
        .into_iter()
        .zip([w1, w2, w3, w4])
        .map(|((rows, cols), wt)| {
            let q = ssim(&block(pred, w, rows.clone(), cols.clone()), &block(gt, w, rows, cols));
            wt * q
        })
        .sum()
}
