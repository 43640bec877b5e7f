//! End-to-end gradient check of the total loss against central finite
//! differences, sampling parameter entries evenly across submodules.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use spnet_core::loss::{total_loss, LossConfig};
use spnet_core::model::SpNet;
use spnet_core::tensor::gradcheck::{compare, Tolerance};
use spnet_core::tensor::precision::{self, Precision};
use spnet_core::tensor::{Graph, ParamId, ParamStore, Tensor};

use crate::config::RunConfig;
use crate::data::stack;
use crate::{synth, HarnessError, Result};

/// Central-difference step. Smaller than the per-op default: with ReLU and
/// max in the graph, a step of 1e-5 already straddles kinks for some entries.
pub const DEFAULT_EPS: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 30;
const BATCH: usize = 2;
const MAX_INPUT_SIZE: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradSample {
    pub stratum: String,
    pub parameter: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub abs_err: f64,
    pub rel_err: f64,
    /// Judged on absolute error because both gradients are tiny.
    pub small: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub eps: f64,
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    pub samples: Vec<GradSample>,
    /// Over samples judged on relative error.
    pub max_rel_err: f64,
    pub max_abs_err_small: f64,
    pub strata: Vec<String>,
    pub passed: bool,
}

/// Submodule a parameter belongs to, e.g. `enc_rgb`, `cim.3`, `mfa.2`,
/// `dec_shared.rfb`, `head`.
pub fn stratum(name: &str) -> String {
    let mut parts = name.split('.');
    let first = parts.next().unwrap_or_default();
    let second = parts.next().unwrap_or_default();
    match first {
        "cim" | "mfa" => format!("{first}.{second}"),
        dec if dec.starts_with("dec_") => {
            if second == "head" {
                "head".to_string()
            } else {
                format!("{dec}.rfb")
            }
        }
        other => other.to_string(),
    }
}

/// Draws `count` entries round-robin over the strata (sorted by name); within
/// a stratum the parameter and the flat index are uniform.
pub fn stratified_entries(store: &ParamStore, count: usize, rng: &mut impl Rng) -> Vec<(ParamId, usize)> {
    let mut strata: BTreeMap<String, Vec<ParamId>> = BTreeMap::new();
    for (id, p) in store.iter() {
        strata.entry(stratum(&p.name)).or_default().push(id);
    }
    let groups: Vec<&Vec<ParamId>> = strata.values().collect();
    (0..count)
        .map(|k| {
            let ids = groups[k % groups.len()];
            let id = ids[rng.gen_range(0..ids.len())];
            (id, rng.gen_range(0..store.get(id).value.numel()))
        })
        .collect()
}

fn loss_value(model: &SpNet, store: &ParamStore, rgb: &Tensor, depth: &Tensor, gt: &Tensor, cfg: &LossConfig) -> Result<f64> {
    let mut g = Graph::new();
    let (r, d) = (g.input(rgb.clone()), g.input(depth.clone()));
    let out = model.forward_with(&mut g, store, r, d)?.output;
    let loss = total_loss(&mut g, &out, gt, cfg)?;
    Ok(g.value(loss).item()?)
}

/// Runs at 64-bit regardless of the configured precision.
pub fn gradcheck(run: &RunConfig, samples: usize, eps: f64) -> Result<GradcheckReport> {
    if samples == 0 {
        return Err(HarnessError::validation("gradcheck needs at least one sample"));
    }
    if run.model.input_size > MAX_INPUT_SIZE {
        return Err(HarnessError::validation(format!(
            "gradcheck is meant for toy configs (input_size <= {MAX_INPUT_SIZE}), got {}",
            run.model.input_size
        )));
    }
    if !(eps > 0.0) {
        return Err(HarnessError::validation("finite-difference step must be positive"));
    }
    run.model.validate()?;
    precision::scoped(Precision::F64, || gradcheck_inner(run, samples, eps))
}

fn gradcheck_inner(run: &RunConfig, count: usize, eps: f64) -> Result<GradcheckReport> {
    let tol = Tolerance::MODEL;
    let data = synth::generate(BATCH, run.model.input_size, run.seed);
    let refs: Vec<_> = data.iter().collect();
    let (rgb, depth, gt) = stack(&refs)?;
    let mut model = SpNet::new(run.model.clone())?;

    let mut g = Graph::new();
    let (r, d) = (g.input(rgb.clone()), g.input(depth.clone()));
    let out = model.forward(&mut g, r, d)?;
    let loss = total_loss(&mut g, &out, &gt, &run.loss)?;
    model.params_mut().zero_grad();
    g.backward(loss, model.params_mut())?;

    let mut rng = ChaCha8Rng::seed_from_u64(run.seed ^ 0x6772_6164);
    let entries = stratified_entries(model.params(), count, &mut rng);
    let mut store = model.params().clone();
    let mut results = Vec::with_capacity(count);
    for &(id, index) in &entries {
        let analytic = model.params().grad(id).expect("gradients were accumulated")[index];
        let orig = store.get(id).value.data()[index];
        store.get_mut(id).value.data_mut()[index] = orig + eps;
        let plus = loss_value(&model, &store, &rgb, &depth, &gt, &run.loss)?;
        store.get_mut(id).value.data_mut()[index] = orig - eps;
        let minus = loss_value(&model, &store, &rgb, &depth, &gt, &run.loss)?;
        store.get_mut(id).value.data_mut()[index] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let c = compare(analytic, numeric, tol);
        let name = store.get(id).name.clone();
        results.push(GradSample {
            stratum: stratum(&name),
            parameter: name,
            index,
            analytic,
            numeric,
            abs_err: c.abs_err,
            rel_err: c.rel_err,
            small: c.small,
            pass: c.pass,
        });
    }
    let max_rel_err = results.iter().filter(|s| !s.small).map(|s| s.rel_err).fold(0.0, f64::max);
    let max_abs_err_small = results.iter().filter(|s| s.small).map(|s| s.abs_err).fold(0.0, f64::max);
    let mut strata: Vec<String> = results.iter().map(|s| s.stratum.clone()).collect();
    strata.sort();
    strata.dedup();
    Ok(GradcheckReport {
        eps,
        rel_tolerance: tol.rel,
        abs_tolerance: tol.abs,
        passed: results.iter().all(|s| s.pass),
        samples: results,
        max_rel_err,
        max_abs_err_small,
        strata,
    })
}
