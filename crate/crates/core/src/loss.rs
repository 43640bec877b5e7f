//! Pixel position-aware loss and the three-branch training objective.
//!
//! Per image, with `p = sigmoid(z)` and boundary weight
//! `w = 1 + gain * |box_mean(g) - g|` over a `window x window` neighbourhood:
//!
//! ```text
//! wbce = sum(w * bce(z, g)) / sum(w)
//! wiou = 1 - (sum(w * p * g) + s) / (sum(w * (p + g - p * g)) + s)
//! ```
//!
//! The box mean averages only the in-image pixels of each window, so a
//! constant mask gets unit weight everywhere. The batch loss is the mean of
//! `wbce + wiou` over images.

use serde::{Deserialize, Serialize};

use crate::model::ForwardOutput;
use crate::tensor::{precision, Graph, Tensor, TensorError, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub edge_weight_gain: f64,
    pub edge_window: usize,
    pub iou_smoothing: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { edge_weight_gain: 5.0, edge_window: 15, iou_smoothing: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.edge_weight_gain >= 0.0) {
            return Err(format!("edge_weight_gain must be >= 0, got {}", self.edge_weight_gain));
        }
        if self.edge_window == 0 || self.edge_window % 2 == 0 {
            return Err(format!("edge_window must be odd and >= 1, got {}", self.edge_window));
        }
        if !(self.iou_smoothing > 0.0) {
            return Err(format!("iou_smoothing must be positive, got {}", self.iou_smoothing));
        }
        Ok(())
    }
}

fn check_gt(logits: &Tensor, gt: &Tensor) -> Result<(), TensorError> {
    if logits.shape() != gt.shape() {
        return Err(TensorError::ShapeMismatch { op: "ppa_loss", left: logits.shape(), right: gt.shape() });
    }
    if logits.channels() != 1 {
        return Err(TensorError::precondition("ppa_loss", "prediction maps must have one channel"));
    }
    if let Some(v) = gt.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(TensorError::precondition("ppa_loss", format!("ground truth must be binary, found {v}")));
    }
    Ok(())
}

/// Boundary emphasis `1 + gain * |box_mean(gt) - gt|` per pixel.
pub fn boundary_weights(gt: &Tensor, cfg: &LossConfig) -> Tensor {
    let [n, c, h, w] = gt.shape();
    let r = cfg.edge_window / 2;
    let mut out = Vec::with_capacity(gt.numel());
    // summed-area table per plane, (h + 1) x (w + 1)
    let mut sat = vec![0.0; (h + 1) * (w + 1)];
    for plane in gt.data().chunks(h * w).take(n * c) {
        for y in 0..h {
            let mut row = 0.0;
            for x in 0..w {
                row += plane[y * w + x];
                sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
            }
        }
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            for x in 0..w {
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let s = sat[y1 * (w + 1) + x1] - sat[y0 * (w + 1) + x1] - sat[y1 * (w + 1) + x0] + sat[y0 * (w + 1) + x0];
                let mean = s / ((y1 - y0) * (x1 - x0)) as f64;
                out.push(1.0 + cfg.edge_weight_gain * (mean - plane[y * w + x]).abs());
            }
        }
    }
    Tensor::new(gt.shape(), out).expect("same shape as gt")
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// `max(z, 0) - z * g + ln(1 + exp(-|z|))`.
#[inline]
fn bce_with_logits(z: f64, g: f64) -> f64 {
    z.max(0.0) - z * g + (-z.abs()).exp().ln_1p()
}

/// Loss value and its gradient w.r.t. the logits.
fn ppa_forward_backward(logits: &Tensor, gt: &Tensor, cfg: &LossConfig) -> (f64, Vec<f64>) {
    let weights = boundary_weights(gt, cfg);
    let [n, _, h, w] = logits.shape();
    let plane = h * w;
    let s = cfg.iou_smoothing;
    let mut total = 0.0;
    let mut grad = vec![0.0; logits.numel()];
    for b in 0..n {
        let r = b * plane..(b + 1) * plane;
        let z = &logits.data()[r.clone()];
        let g = &gt.data()[r.clone()];
        let om = &weights.data()[r.clone()];
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let w_sum: f64 = om.iter().sum();
        let mut bce = 0.0;
        let mut inter = s;
        let mut union = s;
        for i in 0..plane {
            bce += om[i] * bce_with_logits(z[i], g[i]);
            inter += om[i] * p[i] * g[i];
            union += om[i] * (p[i] + g[i] - p[i] * g[i]);
        }
        total += bce / w_sum + 1.0 - inter / union;
        let gb = &mut grad[r];
        for i in 0..plane {
            let d_bce = om[i] * (p[i] - g[i]) / w_sum;
            // d(1 - I/U)/dp = -(w g U - I w (1 - g)) / U^2
            let d_iou_dp = -om[i] * (g[i] * union - inter * (1.0 - g[i])) / (union * union);
            gb[i] = (d_bce + d_iou_dp * p[i] * (1.0 - p[i])) / n as f64;
        }
    }
    (total / n as f64, grad)
}

/// Pixel position-aware loss of one logit map, recorded on `g`.
pub fn ppa_loss(g: &mut Graph, logits: Var, gt: &Tensor, cfg: &LossConfig) -> Result<Var, TensorError> {
    check_gt(g.value(logits), gt)?;
    let (value, grad) = ppa_forward_backward(g.value(logits), gt, cfg);
    let p = precision::current();
    let grad: Vec<f64> = grad.into_iter().map(|v| precision::round(v, p)).collect();
    Ok(g.custom(&[logits], Tensor::scalar(value), move |up| {
        vec![grad.iter().map(|v| v * up[0]).collect()]
    }))
}

/// Loss value without recording a graph.
pub fn ppa_loss_value(logits: &Tensor, gt: &Tensor, cfg: &LossConfig) -> Result<f64, TensorError> {
    check_gt(logits, gt)?;
    Ok(ppa_forward_backward(logits, gt, cfg).0)
}

/// `L(S_sh, G) + L(S_R, G) + L(S_D, G)`; the modality terms are present only
/// when the model has modality-specific decoders.
pub fn total_loss(g: &mut Graph, out: &ForwardOutput<Var>, gt: &Tensor, cfg: &LossConfig) -> Result<Var, TensorError> {
    let mut loss = ppa_loss(g, out.s_shared, gt, cfg)?;
    for branch in [out.s_rgb, out.s_depth].into_iter().flatten() {
        let l = ppa_loss(g, branch, gt, cfg)?;
        loss = g.add(loss, l)?;
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_mask_has_unit_weights() {
        let cfg = LossConfig::default();
        for v in [0.0, 1.0] {
            let w = boundary_weights(&Tensor::full([2, 1, 20, 17], v), &cfg);
            assert!(w.data().iter().all(|&x| x == 1.0));
        }
    }

    #[test]
    fn boundary_pixels_get_more_weight() {
        let gt = Tensor::from_fn([1, 1, 20, 20], |_, _, _, x| if x < 10 { 1.0 } else { 0.0 });
        let w = boundary_weights(&gt, &LossConfig::default());
        assert!(w.at(0, 0, 10, 9) > w.at(0, 0, 10, 0));
        assert!(w.at(0, 0, 10, 10) > w.at(0, 0, 10, 19));
    }

    #[test]
    fn config_validation() {
        assert!(LossConfig::default().validate().is_ok());
        assert!(LossConfig { edge_window: 4, ..Default::default() }.validate().is_err());
        assert!(LossConfig { edge_weight_gain: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn rejects_non_binary_gt() {
        let z = Tensor::zeros([1, 1, 2, 2]);
        let gt = Tensor::full([1, 1, 2, 2], 0.5);
        assert!(ppa_loss_value(&z, &gt, &LossConfig::default()).is_err());
    }
}
