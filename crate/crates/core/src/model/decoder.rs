use crate::tensor::{Graph, ParamStore, Var};

use super::config::LEVELS;
use super::layers::Conv;
use super::mfa::Mfa;
use super::rfb::Rfb;
use super::{ModelConfig, ModelError, PyramidFeatures, Result};

/// Top-down U-Net decoder. Stage 5 applies an RFB to the coarsest level;
/// every lower stage upsamples the running feature, concatenates the skip
/// feature of its level and applies an RFB, optionally followed by MFA.
#[derive(Debug, Clone)]
pub struct Decoder {
    rfbs: Vec<Rfb>,
    mfas: Vec<Option<Mfa>>,
    head: Conv,
    level_shapes: [[usize; 4]; LEVELS],
    up_octaves: Vec<usize>,
    head_octaves: usize,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput {
    /// `(N, 1, input_size, input_size)` pre-sigmoid map.
    pub logits: Var,
    /// Post-stage feature per level, finest first.
    pub feats: Vec<Var>,
}

impl Decoder {
    pub fn new(store: &mut ParamStore, prefix: &str, cfg: &ModelConfig, with_mfa: bool) -> Result<Self> {
        let mut rfbs = Vec::with_capacity(LEVELS);
        let mut mfas = Vec::with_capacity(LEVELS);
        for m in 1..=LEVELS {
            let c = cfg.level_channels(m);
            let in_c = if m == LEVELS { c } else { c + cfg.level_channels(m + 1) };
            rfbs.push(Rfb::new(store, &format!("{prefix}.rfb{m}"), in_c, c)?);
            let mfa = if with_mfa && cfg.uses_mfa_at(m) { Some(Mfa::new(store, m, cfg.mfa_mode, c, c)?) } else { None };
            mfas.push(mfa);
        }
        let head = Conv::pointwise(store, &format!("{prefix}.head"), cfg.level_channels(1), 1)?;
        Ok(Decoder {
            rfbs,
            mfas,
            head,
            level_shapes: cfg.level_shapes(1),
            up_octaves: (1..=LEVELS).map(|m| if m == LEVELS { 0 } else { cfg.octaves_between(m + 1) }).collect(),
            head_octaves: cfg.octaves_between(1),
        })
    }

    pub fn has_mfa(&self) -> bool {
        self.mfas.iter().any(Option::is_some)
    }

    /// `mfa_inputs` holds the per-level modality decoder features
    /// `(g_r, g_d)`; required exactly when this decoder has MFA blocks.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        pyramid: &PyramidFeatures,
        mfa_inputs: Option<(&[Var], &[Var])>,
    ) -> Result<DecoderOutput> {
        if pyramid.levels.len() != LEVELS {
            return Err(ModelError::Input(format!("pyramid has {} levels, expected 5", pyramid.levels.len())));
        }
        for (m, (&v, want)) in pyramid.levels.iter().zip(&self.level_shapes).enumerate() {
            let s = g.shape(v);
            if s[1..] != want[1..] {
                return Err(ModelError::Input(format!("pyramid level {} has shape {s:?}, expected {want:?}", m + 1)));
            }
        }
        if mfa_inputs.is_some() != self.has_mfa() {
            return Err(ModelError::Input(format!(
                "decoder {} MFA inputs",
                if self.has_mfa() { "requires" } else { "does not take" }
            )));
        }
        if let Some((gr, gd)) = mfa_inputs {
            if gr.len() != LEVELS || gd.len() != LEVELS {
                return Err(ModelError::Input("MFA inputs must provide 5 levels per modality".into()));
            }
        }

        let mut feats = vec![None; LEVELS];
        let mut running: Option<Var> = None;
        for m in (1..=LEVELS).rev() {
            let skip = pyramid.level(m);
            let stage_in = match running {
                None => skip,
                Some(mut up) => {
                    for _ in 0..self.up_octaves[m - 1] {
                        up = g.upsample_bilinear_2x(up);
                    }
                    g.concat_channels(&[up, skip])?
                }
            };
            let mut x = self.rfbs[m - 1].forward(g, store, stage_in)?;
            if let (Some(mfa), Some((gr, gd))) = (&self.mfas[m - 1], mfa_inputs) {
                let (pr, pd) = mfa.project(g, store, gr[m - 1], gd[m - 1])?;
                x = mfa.forward(g, store, x, pr, pd)?;
            }
            feats[m - 1] = Some(x);
            running = Some(x);
        }
        let feats: Vec<Var> = feats.into_iter().map(|f| f.expect("every stage ran")).collect();
        let mut logits = self.head.forward(g, store, feats[0])?;
        for _ in 0..self.head_octaves {
            logits = g.upsample_bilinear_2x(logits);
        }
        Ok(DecoderOutput { logits, feats })
    }
}
