//! Training-time augmentation: horizontal flip, small rotation, and border
//! clipping (crop up to 10% per side, then resize back). Each enabled
//! transform fires with probability 1/2.

use rand::Rng;
use spnet_core::tensor::Tensor;

use crate::config::AugmentConfig;
use crate::data::Sample;

pub const MAX_ROTATION_DEG: f64 = 15.0;
pub const MAX_CLIP_FRACTION: f64 = 0.1;

/// Maps an output pixel centre `(y, x)` to continuous source coordinates.
type Warp<'a> = &'a dyn Fn(f64, f64) -> (f64, f64);

/// Bilinear resampling of every plane of `t`, clamping at the border.
fn warp_tensor(t: &Tensor, warp: Warp, binarize: bool) -> Tensor {
    let [n, c, h, w] = t.shape();
    let mut out = Tensor::zeros([n, c, h, w]);
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = warp(y as f64 + 0.5, x as f64 + 0.5);
            let fy = (sy - 0.5).clamp(0.0, (h - 1) as f64);
            let fx = (sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (y0, x0) = (fy.floor() as usize, fx.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            for b in 0..n {
                for ch in 0..c {
                    let top = t.at(b, ch, y0, x0) * (1.0 - tx) + t.at(b, ch, y0, x1) * tx;
                    let bottom = t.at(b, ch, y1, x0) * (1.0 - tx) + t.at(b, ch, y1, x1) * tx;
                    let v = top * (1.0 - ty) + bottom * ty;
                    out.set(b, ch, y, x, if binarize { if v >= 0.5 { 1.0 } else { 0.0 } } else { v });
                }
            }
        }
    }
    out
}

fn apply(sample: &Sample, warp: Warp) -> Sample {
    Sample {
        name: sample.name.clone(),
        rgb: warp_tensor(&sample.rgb, warp, false),
        depth: warp_tensor(&sample.depth, warp, false),
        gt: warp_tensor(&sample.gt, warp, true),
    }
}

pub fn hflip(sample: &Sample) -> Sample {
    let flip = |t: &Tensor| Tensor::from_fn(t.shape(), |n, c, y, x| t.at(n, c, y, t.width() - 1 - x));
    Sample { name: sample.name.clone(), rgb: flip(&sample.rgb), depth: flip(&sample.depth), gt: flip(&sample.gt) }
}

/// Rotation by `degrees` about the image centre.
pub fn rotate(sample: &Sample, degrees: f64) -> Sample {
    let (h, w) = (sample.gt.height() as f64, sample.gt.width() as f64);
    let (s, c) = degrees.to_radians().sin_cos();
    let (cy, cx) = (h / 2.0, w / 2.0);
    apply(sample, &|y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy + c * dy - s * dx, cx + s * dy + c * dx)
    })
}

/// Keeps the window `[top, h - bottom) x [left, w - right)` (fractions of the
/// side length) and stretches it back to full size.
pub fn border_clip(sample: &Sample, top: f64, bottom: f64, left: f64, right: f64) -> Sample {
    let (h, w) = (sample.gt.height() as f64, sample.gt.width() as f64);
    let (y0, y1) = (top * h, h - bottom * h);
    let (x0, x1) = (left * w, w - right * w);
    apply(sample, &|y, x| (y0 + y * (y1 - y0) / h, x0 + x * (x1 - x0) / w))
}

pub fn augment(sample: &Sample, cfg: &AugmentConfig, rng: &mut impl Rng) -> Sample {
    let mut s = sample.clone();
    if cfg.hflip && rng.gen_bool(0.5) {
        s = hflip(&s);
    }
    if cfg.rotate && rng.gen_bool(0.5) {
        s = rotate(&s, rng.gen_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG));
    }
    if cfg.border_clip && rng.gen_bool(0.5) {
        let f: [f64; 4] = [0; 4].map(|_| rng.gen_range(0.0..=MAX_CLIP_FRACTION));
        s = border_clip(&s, f[0], f[1], f[2], f[3]);
    }
    s
}
