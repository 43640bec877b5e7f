use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spnet_core::loss::{boundary_weights, ppa_loss, ppa_loss_value, total_loss, LossConfig};
use spnet_core::model::ForwardOutput;
use spnet_core::tensor::gradcheck::{central_difference, compare, Tolerance, DEFAULT_EPS};
use spnet_core::tensor::{Graph, Shape, Tensor};

fn random_gt(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| if rng.gen_bool(0.4) { 1.0 } else { 0.0 })
}

fn random_logits(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-3.0..3.0))
}

/// Per-image scalar recomputation with a direct window scan.
fn oracle(z: &[f64], g: &[f64], h: usize, w: usize, cfg: &LossConfig) -> f64 {
    let r = (cfg.edge_window / 2) as isize;
    let mut omega = vec![0.0; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (mut sum, mut count) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (yy, xx) = (y + dy, x + dx);
                    if yy >= 0 && xx >= 0 && yy < h as isize && xx < w as isize {
                        sum += g[yy as usize * w + xx as usize];
                        count += 1.0;
                    }
                }
            }
            let i = y as usize * w + x as usize;
            omega[i] = 1.0 + cfg.edge_weight_gain * (sum / count - g[i]).abs();
        }
    }
    let p: Vec<f64> = z.iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
    let mut bce = 0.0;
    let mut wsum = 0.0;
    let mut inter = 0.0;
    let mut union = 0.0;
    for i in 0..h * w {
        let l = -(g[i] * p[i].ln() + (1.0 - g[i]) * (1.0 - p[i]).ln());
        bce += omega[i] * l;
        wsum += omega[i];
        inter += omega[i] * p[i] * g[i];
        union += omega[i] * (p[i] + g[i] - p[i] * g[i]);
    }
    bce / wsum + 1.0 - (inter + cfg.iou_smoothing) / (union + cfg.iou_smoothing)
}

#[test]
fn matches_scalar_oracle() {
    let configs = [LossConfig::default(), LossConfig { edge_window: 3, ..Default::default() }];
    for (seed, cfg) in (0..10).zip(configs.iter().cycle()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w) = if cfg.edge_window == 3 { (6, 5) } else { (4, 4) };
        let z = random_logits(&mut rng, [2, 1, h, w]);
        let gt = random_gt(&mut rng, [2, 1, h, w]);
        let plane = h * w;
        let expected: f64 = (0..2)
            .map(|b| oracle(&z.data()[b * plane..][..plane], &gt.data()[b * plane..][..plane], h, w, cfg))
            .sum::<f64>()
            / 2.0;
        let got = ppa_loss_value(&z, &gt, cfg).unwrap();
        assert!((got - expected).abs() < 1e-10, "{got} vs {expected}");
    }
}

#[test]
fn perfect_prediction_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gt = random_gt(&mut rng, [2, 1, 16, 16]);
    let z = gt.map(|g| if g == 1.0 { 50.0 } else { -50.0 });
    let l = ppa_loss_value(&z, &gt, &LossConfig::default()).unwrap();
    assert!((0.0..1e-6).contains(&l), "{l}");
}

#[test]
fn constant_gt_reduces_to_unweighted_terms() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = random_logits(&mut rng, [1, 1, 5, 5]);
    for v in [0.0, 1.0] {
        let gt = Tensor::full([1, 1, 5, 5], v);
        assert!(boundary_weights(&gt, &LossConfig::default()).data().iter().all(|&w| w == 1.0));
        let unweighted = oracle(z.data(), gt.data(), 5, 5, &LossConfig { edge_weight_gain: 0.0, ..Default::default() });
        let got = ppa_loss_value(&z, &gt, &LossConfig::default()).unwrap();
        assert!((got - unweighted).abs() < 1e-12);
    }
}

#[test]
fn agreeing_rays_never_increase_loss() {
    let cfg = LossConfig::default();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let z0 = random_logits(&mut rng, [1, 1, 8, 8]);
        let gt = random_gt(&mut rng, [1, 1, 8, 8]);
        let dir: Vec<f64> = gt.data().iter().map(|&g| (2.0 * g - 1.0) * rng.gen_range(0.0..1.0)).collect();
        let mut last = f64::INFINITY;
        for step in 0..40 {
            let t = step as f64 * 0.5;
            let z = Tensor::new(z0.shape(), z0.data().iter().zip(&dir).map(|(z, d)| z + t * d).collect()).unwrap();
            let l = ppa_loss_value(&z, &gt, &cfg).unwrap();
            assert!(l <= last + 1e-12, "seed {seed} step {step}: {l} > {last}");
            last = l;
        }
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let cfg = LossConfig::default();
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let z = random_logits(&mut rng, [2, 1, 6, 6]);
        let gt = random_gt(&mut rng, [2, 1, 6, 6]);
        let mut g = Graph::new();
        let zv = g.leaf(z.clone());
        let loss = ppa_loss(&mut g, zv, &gt, &cfg).unwrap();
        let grads = g.gradients(loss).unwrap();
        let analytic = grads.get(zv).unwrap();
        for i in 0..z.numel() {
            let numeric = central_difference(
                |x| ppa_loss_value(&Tensor::new(z.shape(), x.to_vec()).unwrap(), &gt, &cfg).unwrap(),
                z.data(),
                i,
                DEFAULT_EPS,
            );
            let c = compare(analytic[i], numeric, Tolerance::OPS);
            assert!(c.pass, "seed {seed} entry {i}: {c:?}");
        }
    }
}

#[test]
fn total_loss_sums_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = LossConfig::default();
    let gt = random_gt(&mut rng, [1, 1, 8, 8]);
    let a = random_logits(&mut rng, [1, 1, 8, 8]);
    let b = random_logits(&mut rng, [1, 1, 8, 8]);
    let c = random_logits(&mut rng, [1, 1, 8, 8]);
    let la = ppa_loss_value(&a, &gt, &cfg).unwrap();

    let mut g = Graph::new();
    let av = g.input(a.clone());
    let out = ForwardOutput { s_shared: av, s_rgb: Some(av), s_depth: Some(av) };
    let t = total_loss(&mut g, &out, &gt, &cfg).unwrap();
    assert!((g.value(t).item().unwrap() - 3.0 * la).abs() < 1e-12);

    let out = ForwardOutput { s_shared: av, s_rgb: None, s_depth: None };
    let t = total_loss(&mut g, &out, &gt, &cfg).unwrap();
    assert_eq!(g.value(t).item().unwrap(), la);

    let (bv, cv) = (g.input(b.clone()), g.input(c.clone()));
    let out = ForwardOutput { s_shared: av, s_rgb: Some(bv), s_depth: Some(cv) };
    let t = total_loss(&mut g, &out, &gt, &cfg).unwrap();
    let expected = la + ppa_loss_value(&b, &gt, &cfg).unwrap() + ppa_loss_value(&c, &gt, &cfg).unwrap();
    assert_eq!(g.value(t).item().unwrap(), expected);
}

#[test]
fn rejects_invalid_inputs() {
    let cfg = LossConfig::default();
    let z = Tensor::zeros([1, 1, 4, 4]);
    assert!(ppa_loss_value(&z, &Tensor::full([1, 1, 4, 4], 0.3), &cfg).is_err());
    assert!(ppa_loss_value(&z, &Tensor::zeros([1, 1, 4, 5]), &cfg).is_err());
    assert!(ppa_loss_value(&Tensor::zeros([1, 2, 4, 4]), &Tensor::zeros([1, 2, 4, 4]), &cfg).is_err());
}

proptest! {
    #[test]
    fn loss_is_non_negative(seed in any::<u64>(), h in 1usize..10, w in 1usize..10, scale in 0.1f64..30.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = random_logits(&mut rng, [1, 1, h, w]).map(|v| v * scale);
        let gt = random_gt(&mut rng, [1, 1, h, w]);
        let l = ppa_loss_value(&z, &gt, &LossConfig::default()).unwrap();
        prop_assert!(l >= 0.0 && l.is_finite());
    }
}
