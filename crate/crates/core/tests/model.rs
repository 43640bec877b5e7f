use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spnet_core::model::{combine_specific_outputs, Cim, CimMode, Mfa, MfaMode, ModelConfig, ModelError, SpNet};
use spnet_core::tensor::io::{apply_records, read_records, store_records, write_records};
use spnet_core::tensor::{Graph, ParamStore, Tensor};

#[path = "oracle/model.rs"]
mod oracle;

use oracle::{cim_oracle, mfa_oracle, p, random_tensor, randomize, to_map, toy_inputs};

fn assert_close(actual: &[f64], expected: &[f64], tol: f64) {
    assert_eq!(actual.len(), expected.len());
    for (i, (a, e)) in actual.iter().zip(expected).enumerate() {
        assert!((a - e).abs() <= tol, "entry {i}: {a} vs {e}");
    }
}

fn run_cim(cim: &Cim, store: &ParamStore, f_r: &Tensor, f_d: &Tensor, prev: Option<&Tensor>) -> Tensor {
    let mut g = Graph::new();
    let r = g.input(f_r.clone());
    let d = g.input(f_d.clone());
    let pv = prev.map(|t| g.input(t.clone()));
    let t = cim.forward(&mut g, store, r, d, pv).unwrap();
    g.value(t.out).clone()
}

#[test]
fn cim_zero_attention_weights_scale_by_one_and_a_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::new(0);
    let cim = Cim::new(&mut store, 1, CimMode::Full, 3, None).unwrap();
    for name in ["cim.1.wconv_r.weight", "cim.1.wconv_d.weight"] {
        let n = p(&store, name).len();
        store.set_value(name, vec![0.0; n]).unwrap();
    }
    let f_r = random_tensor(&mut rng, [2, 3, 4, 4]);
    let f_d = random_tensor(&mut rng, [2, 3, 4, 4]);
    let mut g = Graph::new();
    let (r, d) = (g.input(f_r.clone()), g.input(f_d.clone()));
    let t = cim.forward(&mut g, &store, r, d, None).unwrap();
    assert!(g.value(t.att_r.unwrap()).data().iter().all(|&w| w == 0.5));
    assert!(g.value(t.att_d.unwrap()).data().iter().all(|&w| w == 0.5));
    for (x, e) in [(&f_r, t.enhanced_r.unwrap()), (&f_d, t.enhanced_d.unwrap())] {
        for (a, b) in x.data().iter().zip(g.value(e).data()) {
            assert_eq!(1.5 * a, *b);
        }
    }
}

#[test]
fn model_zero_attention_weights_scale_every_level() {
    let mut net = SpNet::new(ModelConfig::default()).unwrap();
    let names: Vec<String> = net
        .params()
        .iter()
        .map(|(_, prm)| prm.name.clone())
        .filter(|n| n.starts_with("cim.") && n.contains(".wconv_"))
        .collect();
    assert_eq!(names.len(), 20);
    for name in &names {
        let n = net.params().by_name(name).unwrap().value.numel();
        net.params_mut().set_value(name, vec![0.0; n]).unwrap();
    }
    let (rgb, depth) = toy_inputs(4, 1);
    let mut g = Graph::new();
    let (r, d) = (g.input(rgb), g.input(depth));
    let trace = net.forward_traced(&mut g, r, d).unwrap();
    for t in &trace.cim {
        for (x, e) in [(t.reduced_r, t.enhanced_r.unwrap()), (t.reduced_d, t.enhanced_d.unwrap())] {
            for (a, b) in g.value(x).data().iter().zip(g.value(e).data()) {
                assert_eq!(1.5 * a, *b);
            }
        }
    }
}

#[test]
fn cim_matches_scalar_oracle() {
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        // level 2 with a previous output at twice the resolution
        let mut store = ParamStore::new(seed);
        let cim = Cim::new(&mut store, 2, CimMode::Full, 4, Some(2)).unwrap();
        randomize(&mut store, &mut rng);
        let f_r = random_tensor(&mut rng, [2, 4, 2, 2]);
        let f_d = random_tensor(&mut rng, [2, 4, 2, 2]);
        let prev = random_tensor(&mut rng, [2, 2, 4, 4]);
        let got = run_cim(&cim, &store, &f_r, &f_d, Some(&prev));
        let want = cim_oracle(&store, 2, 4, &to_map(&f_r), &to_map(&f_d), Some(&to_map(&prev)));
        assert_eq!(got.shape(), want.dims);
        assert_close(got.data(), &want.v, 1e-10);

        // level 1 without reduction or previous output
        let mut store = ParamStore::new(seed);
        let cim = Cim::new(&mut store, 1, CimMode::Full, 2, None).unwrap();
        randomize(&mut store, &mut rng);
        let f_r = random_tensor(&mut rng, [2, 2, 2, 2]);
        let f_d = random_tensor(&mut rng, [2, 2, 2, 2]);
        let got = run_cim(&cim, &store, &f_r, &f_d, None);
        let want = cim_oracle(&store, 1, 2, &to_map(&f_r), &to_map(&f_d), None);
        assert_close(got.data(), &want.v, 1e-10);
    }
}

fn swap_modalities(store: &ParamStore) -> ParamStore {
    let mut swapped = store.clone();
    for (_, prm) in store.iter() {
        let other = if prm.name.contains("_r.") {
            prm.name.replace("_r.", "_d.")
        } else if prm.name.contains("_d.") {
            prm.name.replace("_d.", "_r.")
        } else {
            continue;
        };
        swapped.set_value(&other, prm.value.data().to_vec()).unwrap();
    }
    swapped
}

#[test]
fn cim_is_symmetric_under_modality_swap() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new(1);
    let cim = Cim::new(&mut store, 3, CimMode::Full, 4, Some(4)).unwrap();
    randomize(&mut store, &mut rng);
    let swapped = swap_modalities(&store);
    let f_a = random_tensor(&mut rng, [2, 4, 2, 2]);
    let f_b = random_tensor(&mut rng, [2, 4, 2, 2]);
    let prev = random_tensor(&mut rng, [2, 4, 4, 4]);
    let ab = run_cim(&cim, &store, &f_a, &f_b, Some(&prev));
    let ba = run_cim(&cim, &swapped, &f_b, &f_a, Some(&prev));
    assert_close(ab.data(), ba.data(), 1e-10);
}

#[test]
fn cim_identical_inputs_give_square_and_identity_parts() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new(2);
    let cim = Cim::new(&mut store, 1, CimMode::Full, 2, None).unwrap();
    randomize(&mut store, &mut rng);
    let store = {
        // identical branch parameters
        let mut s = store.clone();
        for (_, prm) in store.iter().filter(|(_, prm)| prm.name.contains("_r.")) {
            s.set_value(&prm.name.replace("_r.", "_d."), prm.value.data().to_vec()).unwrap();
        }
        s
    };
    let f = random_tensor(&mut rng, [2, 2, 3, 3]);
    let mut g = Graph::new();
    let (a, b) = (g.input(f.clone()), g.input(f));
    let t = cim.forward(&mut g, &store, a, b, None).unwrap();
    let mul = g.value(t.p_mul.unwrap()).data().to_vec();
    let max = g.value(t.p_max.unwrap()).data().to_vec();
    for (m, x) in mul.iter().zip(&max) {
        assert_eq!(*m, x * x);
    }
}

#[test]
fn cim_rejects_bad_inputs() {
    let mut store = ParamStore::new(0);
    let cim = Cim::new(&mut store, 2, CimMode::Full, 4, Some(2)).unwrap();
    let mut g = Graph::new();
    let a = g.input(Tensor::zeros([1, 4, 2, 2]));
    let b = g.input(Tensor::zeros([1, 4, 4, 4]));
    assert!(cim.forward(&mut g, &store, a, b, None).is_err());
    let prev = g.input(Tensor::zeros([2, 2, 4, 4]));
    let a2 = g.input(Tensor::zeros([1, 4, 2, 2]));
    assert!(cim.forward(&mut g, &store, a, a2, Some(prev)).is_err());
    // previous output is required at this level
    assert!(matches!(cim.forward(&mut g, &store, a, a2, None), Err(ModelError::Input(_))));
}

fn run_mfa(mfa: &Mfa, store: &ParamStore, g_s: &Tensor, g_r: &Tensor, g_d: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let (s, r, d) = (g.input(g_s.clone()), g.input(g_r.clone()), g.input(g_d.clone()));
    let out = mfa.forward(&mut g, store, s, r, d).unwrap();
    g.value(out).clone()
}

#[test]
fn mfa_matches_scalar_oracle() {
    for mode in [MfaMode::Full, MfaMode::Concat, MfaMode::EnhanceFusion, MfaMode::Off] {
        for seed in 0..5 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let mut store = ParamStore::new(seed);
            let mfa = Mfa::new(&mut store, 1, mode, 2, 2).unwrap();
            randomize(&mut store, &mut rng);
            let ts: Vec<Tensor> = (0..3).map(|_| random_tensor(&mut rng, [1, 2, 2, 2])).collect();
            let got = run_mfa(&mfa, &store, &ts[0], &ts[1], &ts[2]);
            let want = mfa_oracle(&store, mode, 2, &to_map(&ts[0]), &to_map(&ts[1]), &to_map(&ts[2]));
            assert_close(got.data(), &want.v, 1e-10);
        }
    }
}

#[test]
fn mfa_residual_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::new(0);
    let mfa = Mfa::new(&mut store, 1, MfaMode::Full, 2, 2).unwrap();
    store.set_value("mfa.1.bconv.weight", vec![0.0; 2 * 4 * 9]).unwrap();
    let g_s = random_tensor(&mut rng, [1, 2, 3, 3]);
    let zero = Tensor::zeros([1, 2, 3, 3]);
    assert_eq!(run_mfa(&mfa, &store, &g_s, &zero, &zero).data(), g_s.data());

    let mut store = ParamStore::new(0);
    let mfa = Mfa::new(&mut store, 1, MfaMode::Full, 2, 2).unwrap();
    let g_r = random_tensor(&mut rng, [1, 2, 3, 3]);
    let g_d = random_tensor(&mut rng, [1, 2, 3, 3]);
    let out = run_mfa(&mfa, &store, &zero, &g_r, &g_d);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn mfa_rejects_mismatched_shapes() {
    let mut store = ParamStore::new(0);
    let mfa = Mfa::new(&mut store, 1, MfaMode::Full, 2, 2).unwrap();
    let mut g = Graph::new();
    let s = g.input(Tensor::zeros([1, 2, 2, 2]));
    let r = g.input(Tensor::zeros([1, 2, 4, 4]));
    assert!(mfa.forward(&mut g, &store, s, r, s).is_err());
}

#[test]
fn toy_forward_shapes_and_finiteness() {
    let net = SpNet::new(ModelConfig::default()).unwrap();
    let (rgb, depth) = toy_inputs(1, 1);
    let mut g = Graph::new();
    let (r, d) = (g.input(rgb), g.input(depth));
    let trace = net.forward_traced(&mut g, r, d).unwrap();
    let expected = [[1, 4, 16, 16], [1, 8, 16, 16], [1, 16, 8, 8], [1, 32, 4, 4], [1, 64, 2, 2]];
    for m in 0..5 {
        assert_eq!(g.shape(trace.f_rgb.levels[m]), expected[m]);
        assert_eq!(g.shape(trace.f_depth.levels[m]), expected[m]);
        assert_eq!(g.shape(trace.f_shared.levels[m]), expected[m]);
        for feats in [trace.g_rgb.as_ref().unwrap(), trace.g_depth.as_ref().unwrap(), &trace.g_shared] {
            assert_eq!(g.shape(feats[m])[2..], expected[m][2..]);
        }
    }
    let out = &trace.output;
    for v in [out.s_shared, out.s_rgb.unwrap(), out.s_depth.unwrap()] {
        assert_eq!(g.shape(v), [1, 1, 64, 64]);
        assert!(g.value(v).all_finite());
    }
}

#[test]
fn encoder_on_zero_input_is_finite() {
    let net = SpNet::new(ModelConfig::default()).unwrap();
    let out = net.predict(&Tensor::zeros([2, 3, 64, 64]), &Tensor::zeros([2, 1, 64, 64])).unwrap();
    assert!(out.s_shared.all_finite());
}

#[test]
fn wrong_input_resolution_is_rejected() {
    let net = SpNet::new(ModelConfig::default()).unwrap();
    let err = net.predict(&Tensor::zeros([1, 3, 32, 32]), &Tensor::zeros([1, 1, 32, 32]));
    assert!(matches!(err, Err(ModelError::Input(_))));
    let err = net.predict(&Tensor::zeros([1, 3, 64, 64]), &Tensor::zeros([2, 1, 64, 64]));
    assert!(err.is_err());
}

#[test]
fn without_specific_decoders_matches_mfa_off() {
    let (rgb, depth) = toy_inputs(2, 1);
    let c1 = SpNet::new(ModelConfig { specific_decoders: false, ..Default::default() }).unwrap();
    let b1 = SpNet::new(ModelConfig { mfa_mode: MfaMode::Off, ..Default::default() }).unwrap();
    let o1 = c1.predict(&rgb, &depth).unwrap();
    let o2 = b1.predict(&rgb, &depth).unwrap();
    assert!(o1.s_rgb.is_none() && o1.s_depth.is_none());
    assert!(o2.s_rgb.is_some() && o2.s_depth.is_some());
    assert_eq!(o1.s_shared, o2.s_shared);
}

#[test]
fn swapping_modalities_changes_output() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_tensor(&mut rng, [1, 1, 64, 64]);
    let b = random_tensor(&mut rng, [1, 1, 64, 64]);
    let as_rgb = |t: &Tensor| Tensor::from_fn([1, 3, 64, 64], |_, _, y, x| t.at(0, 0, y, x));
    let net = SpNet::new(ModelConfig::default()).unwrap();
    let o1 = net.predict(&as_rgb(&a), &b).unwrap();
    let o2 = net.predict(&as_rgb(&b), &a).unwrap();
    assert_ne!(o1.s_shared, o2.s_shared);
}

#[test]
fn propagation_only_changes_higher_levels() {
    let (rgb, depth) = toy_inputs(3, 1);
    let run = |mode| {
        let net = SpNet::new(ModelConfig { cim_mode: mode, ..Default::default() }).unwrap();
        let mut g = Graph::new();
        let (r, d) = (g.input(rgb.clone()), g.input(depth.clone()));
        let t = net.forward_traced(&mut g, r, d).unwrap();
        (g.value(t.f_shared.levels[0]).clone(), g.value(t.f_shared.levels[1]).clone())
    };
    let (full1, full2) = run(CimMode::Full);
    let (np1, np2) = run(CimMode::NoPropagation);
    assert_eq!(full1, np1);
    assert_ne!(full2, np2);
}

#[test]
fn every_variant_runs() {
    let (rgb, depth) = toy_inputs(6, 1);
    let variants = [
        ModelConfig { cim_mode: CimMode::ConcatOnly, ..Default::default() },
        ModelConfig { cim_mode: CimMode::EnhanceOnly, ..Default::default() },
        ModelConfig { cim_mode: CimMode::FuseOnly, ..Default::default() },
        ModelConfig { cim_mode: CimMode::NoPropagation, ..Default::default() },
        ModelConfig { mfa_mode: MfaMode::EnhanceFusion, ..Default::default() },
        ModelConfig { mfa_mode: MfaMode::Concat, ..Default::default() },
        ModelConfig { cim_levels: 1, ..Default::default() },
        ModelConfig { cim_levels: 3, ..Default::default() },
        ModelConfig { mfa_levels: vec![1, 2], ..Default::default() },
    ];
    for cfg in variants {
        let net = SpNet::new(cfg.clone()).unwrap();
        let out = net.predict(&rgb, &depth).unwrap();
        assert!(out.s_shared.all_finite(), "{cfg:?}");
    }
}

#[test]
fn cim_levels_fall_back_to_concat_below_coverage() {
    let net = SpNet::new(ModelConfig { cim_levels: 3, ..Default::default() }).unwrap();
    let modes: Vec<CimMode> = net.cims().iter().map(|c| c.mode).collect();
    assert_eq!(modes, [CimMode::ConcatOnly, CimMode::ConcatOnly, CimMode::Full, CimMode::Full, CimMode::Full]);
    assert!(!net.cims()[2].expects_prev());
    assert!(net.cims()[3].expects_prev());
}

#[test]
fn every_parameter_receives_gradient() {
    let (rgb, depth) = toy_inputs(10, 2);
    let gt = Tensor::from_fn([2, 1, 64, 64], |n, _, y, x| {
        let (cy, cx) = if n == 0 { (20.0, 30.0) } else { (40.0, 25.0) };
        let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
        if d2 < 150.0 { 1.0 } else { 0.0 }
    });
    let mut net = SpNet::new(ModelConfig::default()).unwrap();
    let mut g = Graph::new();
    let (r, d) = (g.input(rgb), g.input(depth));
    let out = net.forward(&mut g, r, d).unwrap();
    let loss = spnet_core::loss::total_loss(&mut g, &out, &gt, &Default::default()).unwrap();
    net.params_mut().zero_grad();
    g.backward(loss, net.params_mut()).unwrap();
    for (id, prm) in net.params().iter() {
        let grad = net.params().grad(id).unwrap();
        assert!(grad.iter().all(|v| v.is_finite()), "{}", prm.name);
        assert!(grad.iter().any(|&v| v != 0.0), "{} has zero gradient", prm.name);
    }
}

#[test]
fn weights_round_trip_gives_identical_outputs() {
    let (rgb, depth) = toy_inputs(11, 1);
    let mut trained = SpNet::new(ModelConfig { seed: 1, ..Default::default() }).unwrap();
    // perturb so the loaded weights cannot coincide with a fresh init
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let ids: Vec<_> = trained.params().ids().collect();
    for id in ids {
        for v in trained.params_mut().get_mut(id).value.data_mut() {
            *v += f64::from(rng.gen_range(-0.01f32..0.01));
            *v = f64::from(*v as f32);
        }
    }
    let mut buf = Vec::new();
    write_records(&mut buf, &store_records(trained.params())).unwrap();
    let mut loaded = SpNet::new(ModelConfig { seed: 2, ..Default::default() }).unwrap();
    assert_ne!(loaded.predict(&rgb, &depth).unwrap(), trained.predict(&rgb, &depth).unwrap());
    apply_records(loaded.params_mut(), &read_records(buf.as_slice()).unwrap()).unwrap();
    assert_eq!(loaded.predict(&rgb, &depth).unwrap(), trained.predict(&rgb, &depth).unwrap());
}

#[test]
fn forward_is_deterministic_per_seed() {
    let (rgb, depth) = toy_inputs(13, 1);
    let a = SpNet::new(ModelConfig::default()).unwrap().predict(&rgb, &depth).unwrap();
    let b = SpNet::new(ModelConfig::default()).unwrap().predict(&rgb, &depth).unwrap();
    let c = SpNet::new(ModelConfig { seed: 9, ..Default::default() }).unwrap().predict(&rgb, &depth).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn combine_specific_outputs_averages_probabilities() {
    let a = Tensor::new([1, 1, 1, 3], vec![20.0, 0.0, -1.0]).unwrap();
    let b = Tensor::new([1, 1, 1, 3], vec![-20.0, 0.0, 2.0]).unwrap();
    let c = combine_specific_outputs(&a, &b).unwrap();
    let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
    assert!((c.data()[0] - 0.5).abs() < 1e-12);
    assert_eq!(c.data()[1], 0.5);
    assert!((c.data()[2] - (sig(-1.0) + sig(2.0)) / 2.0).abs() < 1e-15);
    let same = combine_specific_outputs(&a, &a).unwrap();
    assert!((same.data()[2] - sig(-1.0)).abs() < 1e-15);
    assert!(combine_specific_outputs(&a, &Tensor::zeros([1, 1, 1, 2])).is_err());
}

#[test]
fn backbone_scale_config_validates() {
    let cfg = ModelConfig::backbone_scale();
    cfg.validate().unwrap();
    assert_eq!(cfg.level_shapes(1)[4], [1, 2048, 11, 11]);
}
