//! Straight-line scalar re-implementations of CIM and MFA over flat NCHW
//! buffers, plus helpers for filling tensors and parameter stores.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spnet_core::model::MfaMode;
use spnet_core::tensor::{ParamStore, Shape, Tensor};

pub type Dims = [usize; 4];

pub struct Map {
    pub dims: Dims,
    pub v: Vec<f64>,
}

impl Map {
    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        let [_, cc, h, w] = self.dims;
        self.v[((n * cc + c) * h + y) * w + x]
    }
}

pub fn conv(x: &Map, weight: &[f64], bias: Option<&[f64]>, out_c: usize, k: usize, dil: usize) -> Map {
    let [n, in_c, h, w] = x.dims;
    let pad = (dil * (k / 2)) as isize;
    let mut v = Vec::new();
    for b in 0..n {
        for o in 0..out_c {
            for y in 0..h {
                for xx in 0..w {
                    let mut acc = bias.map_or(0.0, |b| b[o]);
                    for i in 0..in_c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let sy = y as isize + (ky * dil) as isize - pad;
                                let sx = xx as isize + (kx * dil) as isize - pad;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let wv = weight[((o * in_c + i) * k + ky) * k + kx];
                                acc += wv * x.at(b, i, sy as usize, sx as usize);
                            }
                        }
                    }
                    v.push(acc);
                }
            }
        }
    }
    Map { dims: [n, out_c, h, w], v }
}

pub fn bconv(x: &Map, weight: &[f64], gamma: &[f64], beta: &[f64], out_c: usize) -> Map {
    let y = conv(x, weight, None, out_c, 3, 1);
    let [n, c, h, w] = y.dims;
    let count = (n * h * w) as f64;
    let mut out = y.v.clone();
    for ch in 0..c {
        let mut mean = 0.0;
        for b in 0..n {
            for p in 0..h * w {
                mean += y.v[(b * c + ch) * h * w + p];
            }
        }
        mean /= count;
        let mut var = 0.0;
        for b in 0..n {
            for p in 0..h * w {
                let d = y.v[(b * c + ch) * h * w + p] - mean;
                var += d * d;
            }
        }
        var /= count;
        let inv = 1.0 / (var + 1e-5).sqrt();
        for b in 0..n {
            for p in 0..h * w {
                let i = (b * c + ch) * h * w + p;
                let z = (y.v[i] - mean) * inv * gamma[ch] + beta[ch];
                out[i] = if z > 0.0 { z } else { 0.0 };
            }
        }
    }
    Map { dims: y.dims, v: out }
}

pub fn sigmoid(x: &Map) -> Map {
    Map { dims: x.dims, v: x.v.iter().map(|&z| 1.0 / (1.0 + (-z).exp())).collect() }
}

pub fn zip(a: &Map, b: &Map, f: impl Fn(f64, f64) -> f64) -> Map {
    assert_eq!(a.dims, b.dims);
    Map { dims: a.dims, v: a.v.iter().zip(&b.v).map(|(&x, &y)| f(x, y)).collect() }
}

pub fn concat(parts: &[&Map]) -> Map {
    let [n, _, h, w] = parts[0].dims;
    let c: usize = parts.iter().map(|p| p.dims[1]).sum();
    let mut v = Vec::new();
    for b in 0..n {
        for p in parts {
            let pc = p.dims[1];
            v.extend_from_slice(&p.v[b * pc * h * w..(b + 1) * pc * h * w]);
        }
    }
    Map { dims: [n, c, h, w], v }
}

pub fn avgpool(x: &Map) -> Map {
    let [n, c, h, w] = x.dims;
    let mut v = Vec::new();
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    let s = x.at(b, ch, 2 * y, 2 * xx)
                        + x.at(b, ch, 2 * y, 2 * xx + 1)
                        + x.at(b, ch, 2 * y + 1, 2 * xx)
                        + x.at(b, ch, 2 * y + 1, 2 * xx + 1);
                    v.push(s / 4.0);
                }
            }
        }
    }
    Map { dims: [n, c, h / 2, w / 2], v }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> Tensor {
    Tensor::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0..1.0))
}

pub fn randomize(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).value.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
}

pub fn toy_inputs(seed: u64, n: usize) -> (Tensor, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (random_tensor(&mut rng, [n, 3, 64, 64]), random_tensor(&mut rng, [n, 1, 64, 64]))
}

pub fn to_map(t: &Tensor) -> Map {
    Map { dims: t.shape(), v: t.data().to_vec() }
}

pub fn p<'a>(store: &'a ParamStore, name: &str) -> &'a [f64] {
    store.by_name(name).unwrap_or_else(|| panic!("missing {name}")).value.data()
}

pub fn cim_oracle(store: &ParamStore, level: usize, c: usize, f_r: &Map, f_d: &Map, prev: Option<&Map>) -> Map {
    let k = format!("cim.{level}");
    let half = if level == 1 { c } else { c / 2 };
    let (r, d) = if level == 1 {
        (Map { dims: f_r.dims, v: f_r.v.clone() }, Map { dims: f_d.dims, v: f_d.v.clone() })
    } else {
        (
            conv(f_r, p(store, &format!("{k}.reduce_r.weight")), Some(p(store, &format!("{k}.reduce_r.bias"))), half, 1, 1),
            conv(f_d, p(store, &format!("{k}.reduce_d.weight")), Some(p(store, &format!("{k}.reduce_d.bias"))), half, 1, 1),
        )
    };
    let w_r = sigmoid(&conv(&r, p(store, &format!("{k}.wconv_r.weight")), Some(p(store, &format!("{k}.wconv_r.bias"))), half, 3, 1));
    let w_d = sigmoid(&conv(&d, p(store, &format!("{k}.wconv_d.weight")), Some(p(store, &format!("{k}.wconv_d.bias"))), half, 3, 1));
    let e_r = zip(&r, &w_d, |a, w| a + a * w);
    let e_d = zip(&d, &w_r, |a, w| a + a * w);
    let bc = |x: &Map, name: &str, out: usize| {
        bconv(
            x,
            p(store, &format!("{k}.{name}.weight")),
            p(store, &format!("{k}.{name}.gamma")),
            p(store, &format!("{k}.{name}.beta")),
            out,
        )
    };
    let b_r = bc(&e_r, "bconv_r", half);
    let b_d = bc(&e_d, "bconv_d", half);
    let mul = zip(&b_r, &b_d, |a, b| a * b);
    let max = zip(&b_r, &b_d, f64::max);
    let p_cat1 = bc(&concat(&[&mul, &max]), "bconv_cat", c);
    match prev {
        Some(prev) => {
            let mut aligned = avgpool(prev);
            while aligned.dims[2] > p_cat1.dims[2] {
                aligned = avgpool(&aligned);
            }
            bc(&concat(&[&p_cat1, &aligned]), "bconv_prev", c)
        }
        None => p_cat1,
    }
}

pub fn mfa_oracle(store: &ParamStore, mode: MfaMode, c: usize, g_s: &Map, g_r: &Map, g_d: &Map) -> Map {
    let bc = |x: &Map| {
        bconv(x, p(store, "mfa.1.bconv.weight"), p(store, "mfa.1.bconv.gamma"), p(store, "mfa.1.bconv.beta"), c)
    };
    match mode {
        MfaMode::Full => {
            let rs = zip(g_s, g_r, |a, b| a * b);
            let ds = zip(g_s, g_d, |a, b| a * b);
            let sc = bc(&concat(&[&rs, &ds]));
            zip(&sc, g_s, |a, b| a + b)
        }
        MfaMode::Concat => bc(&concat(&[g_s, g_r, g_d])),
        MfaMode::EnhanceFusion => {
            let a_r = sigmoid(&conv(g_r, p(store, "mfa.1.att_r.weight"), Some(p(store, "mfa.1.att_r.bias")), c, 3, 1));
            let a_d = sigmoid(&conv(g_d, p(store, "mfa.1.att_d.weight"), Some(p(store, "mfa.1.att_d.bias")), c, 3, 1));
            let gr = zip(g_s, &a_r, |s, a| s * a);
            let gd = zip(g_s, &a_d, |s, a| s * a);
            let sum = zip(&gr, &gd, |a, b| a + b);
            zip(g_s, &sum, |a, b| a + b)
        }
        MfaMode::Off => Map { dims: g_s.dims, v: g_s.v.clone() },
    }
}
