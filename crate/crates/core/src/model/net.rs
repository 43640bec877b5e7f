use crate::tensor::{Graph, ParamStore, Tensor, TensorError, Var};

use super::cim::{Cim, CimTrace};
use super::config::LEVELS;
use super::decoder::Decoder;
use super::encoder::Encoder;
use super::{CimMode, MfaMode, ModelConfig, ModelError, PyramidFeatures, Result};

/// The three prediction maps as pre-sigmoid logits.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput<T> {
    pub s_shared: T,
    pub s_rgb: Option<T>,
    pub s_depth: Option<T>,
}

/// Forward output plus every intermediate pyramid.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub output: ForwardOutput<Var>,
    pub f_rgb: PyramidFeatures,
    pub f_depth: PyramidFeatures,
    pub f_shared: PyramidFeatures,
    pub g_rgb: Option<Vec<Var>>,
    pub g_depth: Option<Vec<Var>>,
    pub g_shared: Vec<Var>,
    pub cim: Vec<CimTrace>,
}

/// Two modality-specific encoder/decoder networks and a shared network fed by
/// CIM fusion and MFA aggregation.
#[derive(Debug, Clone)]
pub struct SpNet {
    config: ModelConfig,
    params: ParamStore,
    enc_rgb: Encoder,
    enc_depth: Encoder,
    cims: Vec<Cim>,
    dec_rgb: Option<Decoder>,
    dec_depth: Option<Decoder>,
    dec_shared: Decoder,
}

impl SpNet {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new(config.seed);
        let enc_rgb = Encoder::new(&mut params, "enc_rgb", 3, &config)?;
        let enc_depth = Encoder::new(&mut params, "enc_depth", 1, &config)?;
        let first = config.first_cim_level();
        let mut cims = Vec::with_capacity(LEVELS);
        for m in 1..=LEVELS {
            let mode = if m >= first { config.cim_mode } else { CimMode::ConcatOnly };
            let prev = (m > first).then(|| config.level_channels(m - 1));
            cims.push(Cim::new(&mut params, m, mode, config.level_channels(m), prev)?);
        }
        let (dec_rgb, dec_depth) = if config.specific_decoders {
            (
                Some(Decoder::new(&mut params, "dec_rgb", &config, false)?),
                Some(Decoder::new(&mut params, "dec_depth", &config, false)?),
            )
        } else {
            (None, None)
        };
        let with_mfa = config.specific_decoders && config.mfa_mode != MfaMode::Off;
        let dec_shared = Decoder::new(&mut params, "dec_shared", &config, with_mfa)?;
        Ok(SpNet { config, params, enc_rgb, enc_depth, cims, dec_rgb, dec_depth, dec_shared })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn cims(&self) -> &[Cim] {
        &self.cims
    }

    pub fn forward(&self, g: &mut Graph, rgb: Var, depth: Var) -> Result<ForwardOutput<Var>> {
        Ok(self.forward_traced(g, rgb, depth)?.output)
    }

    /// Forward pass evaluated against `params` instead of the model's own
    /// store, which must have been built from the same config.
    pub fn forward_with(&self, g: &mut Graph, params: &ParamStore, rgb: Var, depth: Var) -> Result<ForwardTrace> {
        self.run(g, params, rgb, depth)
    }

    pub fn forward_traced(&self, g: &mut Graph, rgb: Var, depth: Var) -> Result<ForwardTrace> {
        self.run(g, &self.params, rgb, depth)
    }

    fn run(&self, g: &mut Graph, store: &ParamStore, rgb: Var, depth: Var) -> Result<ForwardTrace> {
        let (sr, sd) = (g.shape(rgb), g.shape(depth));
        let s = self.config.input_size;
        if sr[1..] != [3, s, s] || sd[1..] != [1, s, s] || sr[0] != sd[0] {
            return Err(ModelError::Input(format!(
                "expected rgb (N, 3, {s}, {s}) and depth (N, 1, {s}, {s}), got {sr:?} and {sd:?}"
            )));
        }
        let f_rgb = self.enc_rgb.forward(g, store, rgb)?;
        let f_depth = self.enc_depth.forward(g, store, depth)?;

        let (g_rgb, g_depth, s_rgb, s_depth) = match (&self.dec_rgb, &self.dec_depth) {
            (Some(dr), Some(dd)) => {
                let or = dr.forward(g, store, &f_rgb, None)?;
                let od = dd.forward(g, store, &f_depth, None)?;
                (Some(or.feats), Some(od.feats), Some(or.logits), Some(od.logits))
            }
            _ => (None, None, None, None),
        };

        let mut cim_traces = Vec::with_capacity(LEVELS);
        let mut fused = Vec::with_capacity(LEVELS);
        let mut prev: Option<Var> = None;
        for (i, cim) in self.cims.iter().enumerate() {
            let p = if cim.expects_prev() { prev } else { None };
            let t = cim.forward(g, store, f_rgb.levels[i], f_depth.levels[i], p)?;
            fused.push(t.out);
            prev = Some(t.out);
            cim_traces.push(t);
        }
        let f_shared = PyramidFeatures { levels: fused };

        let mfa_inputs = match (&g_rgb, &g_depth) {
            (Some(r), Some(d)) if self.dec_shared.has_mfa() => Some((r.as_slice(), d.as_slice())),
            _ => None,
        };
        let shared = self.dec_shared.forward(g, store, &f_shared, mfa_inputs)?;

        Ok(ForwardTrace {
            output: ForwardOutput { s_shared: shared.logits, s_rgb, s_depth },
            f_rgb,
            f_depth,
            f_shared,
            g_rgb,
            g_depth,
            g_shared: shared.feats,
            cim: cim_traces,
        })
    }

    /// Forward pass on a throwaway graph, returning the logit tensors.
    pub fn predict(&self, rgb: &Tensor, depth: &Tensor) -> Result<ForwardOutput<Tensor>> {
        let mut g = Graph::new();
        let r = g.input(rgb.clone());
        let d = g.input(depth.clone());
        let out = self.forward(&mut g, r, d)?;
        Ok(ForwardOutput {
            s_shared: g.value(out.s_shared).clone(),
            s_rgb: out.s_rgb.map(|v| g.value(v).clone()),
            s_depth: out.s_depth.map(|v| g.value(v).clone()),
        })
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Probability map averaging both modality-specific predictions.
pub fn combine_specific_outputs(s_rgb: &Tensor, s_depth: &Tensor) -> Result<Tensor, TensorError> {
    s_rgb.zip_map(s_depth, "combine_specific_outputs", |a, b| 0.5 * (sigmoid(a) + sigmoid(b)))
}

/// Elementwise logistic function of a logit tensor.
pub fn probabilities(logits: &Tensor) -> Tensor {
    logits.map(sigmoid)
}
