//! Seeded synthetic RGB-D triples: anti-aliased discs and rectangles over a
//! gradient background, with depth as an inverse-distance ramp in which the
//! objects stand closer than the background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spnet_core::tensor::Tensor;

use crate::data::Sample;

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy)]
enum Shape {
    Disc { cy: f64, cx: f64, r: f64 },
    Rect { cy: f64, cx: f64, hy: f64, hx: f64 },
}

impl Shape {
    fn contains(&self, y: f64, x: f64) -> bool {
        match *self {
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) <= r * r,
            Shape::Rect { cy, cx, hy, hx } => (y - cy).abs() <= hy && (x - cx).abs() <= hx,
        }
    }

    fn coverage(&self, py: usize, px: usize) -> f64 {
        let mut hits = 0;
        for sy in 0..SUPERSAMPLE {
            for sx in 0..SUPERSAMPLE {
                let y = py as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64;
                let x = px as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64;
                hits += self.contains(y, x) as usize;
            }
        }
        hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64
    }

    fn random(rng: &mut ChaCha8Rng, s: f64) -> Shape {
        let cy = rng.gen_range(0.25 * s..0.75 * s);
        let cx = rng.gen_range(0.25 * s..0.75 * s);
        if rng.gen_bool(0.5) {
            Shape::Disc { cy, cx, r: rng.gen_range(0.12 * s..0.25 * s) }
        } else {
            Shape::Rect { cy, cx, hy: rng.gen_range(0.1 * s..0.22 * s), hx: rng.gen_range(0.1 * s..0.22 * s) }
        }
    }
}

/// One triple at `size x size`, fully determined by `rng`.
pub fn render(name: String, size: usize, rng: &mut ChaCha8Rng) -> Sample {
    let s = size as f64;
    let bg_a: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(0.05..0.45));
    let bg_b: [f64; 3] = [0, 1, 2].map(|_| rng.gen_range(0.05..0.45));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let (dy, dx) = (angle.sin(), angle.cos());
    let n_shapes = rng.gen_range(1..=2);
    let shapes: Vec<(Shape, [f64; 3], f64)> = (0..n_shapes)
        .map(|_| {
            let shape = Shape::random(rng, s);
            let color = [0, 1, 2].map(|_| rng.gen_range(0.55..1.0));
            let distance = rng.gen_range(1.0..1.5);
            (shape, color, distance)
        })
        .collect();

    let mut rgb = Tensor::zeros([1, 3, size, size]);
    let mut depth = Tensor::zeros([1, 1, size, size]);
    let mut gt = Tensor::zeros([1, 1, size, size]);
    for y in 0..size {
        for x in 0..size {
            // position along the gradient direction, in [0, 1]
            let t = (((y as f64 + 0.5) / s - 0.5) * dy + ((x as f64 + 0.5) / s - 0.5) * dx) / std::f64::consts::SQRT_2 + 0.5;
            let mut color = [0, 1, 2].map(|c| bg_a[c] + (bg_b[c] - bg_a[c]) * t);
            let mut d = 1.0 / (2.0 + 2.0 * t);
            let mut fg = 0.0f64;
            for (shape, c, dist) in &shapes {
                let cov = shape.coverage(y, x);
                if cov > 0.0 {
                    for ch in 0..3 {
                        color[ch] = color[ch] * (1.0 - cov) + c[ch] * cov;
                    }
                    d = d * (1.0 - cov) + cov / dist;
                    fg = fg.max(cov);
                }
            }
            for (ch, v) in color.iter().enumerate() {
                rgb.set(0, ch, y, x, *v);
            }
            depth.set(0, 0, y, x, d);
            gt.set(0, 0, y, x, if fg >= 0.5 { 1.0 } else { 0.0 });
        }
    }
    Sample { name, rgb, depth, gt }
}

/// `count` triples named `synth_000`, `synth_001`, ...
pub fn generate(count: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|i| render(format!("synth_{i:03}"), size, &mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_well_formed() {
        let a = generate(3, 32, 7);
        assert_eq!(a, generate(3, 32, 7));
        assert_ne!(a, generate(3, 32, 8));
        for s in &a {
            assert!(s.gt.data().iter().all(|&v| v == 0.0 || v == 1.0));
            let fg = s.gt.sum();
            assert!(fg > 0.0 && fg < 32.0 * 32.0);
            assert!(s.rgb.data().iter().chain(s.depth.data()).all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
