use crate::tensor::{Graph, ParamStore, TensorError, Var};

use super::layers::{Bconv, Conv};
use super::{MfaMode, Result};

/// Multi-modal feature aggregation for one shared-decoder stage.
///
/// `Full`: `g_sc = Bconv([g_s * g_r, g_s * g_d])`, output `g_sc + g_s`.
///
/// `EnhanceFusion` is one reading of the attention-gated alternative:
/// `g_s + g_s * sigmoid(conv3(g_r)) + g_s * sigmoid(conv3(g_d))`.
///
/// `Concat`: `Bconv([g_s, g_r, g_d])`.
///
/// The modality features are first projected to the shared width by per-level
/// 1x1 convolutions ([`Mfa::project`]).
#[derive(Debug, Clone)]
pub struct Mfa {
    pub mode: MfaMode,
    proj_r: Conv,
    proj_d: Conv,
    bconv: Option<Bconv>,
    att_r: Option<Conv>,
    att_d: Option<Conv>,
}

impl Mfa {
    pub fn new(store: &mut ParamStore, level: usize, mode: MfaMode, channels: usize, modality_channels: usize) -> Result<Self> {
        let p = format!("mfa.{level}");
        let proj_r = Conv::pointwise(store, &format!("{p}.proj_r"), modality_channels, channels)?;
        let proj_d = Conv::pointwise(store, &format!("{p}.proj_d"), modality_channels, channels)?;
        let (mut bconv, mut att_r, mut att_d) = (None, None, None);
        match mode {
            MfaMode::Full => bconv = Some(Bconv::new(store, &format!("{p}.bconv"), 2 * channels, channels, 1)?),
            MfaMode::Concat => bconv = Some(Bconv::new(store, &format!("{p}.bconv"), 3 * channels, channels, 1)?),
            MfaMode::EnhanceFusion => {
                att_r = Some(Conv::same3x3(store, &format!("{p}.att_r"), channels, channels)?);
                att_d = Some(Conv::same3x3(store, &format!("{p}.att_d"), channels, channels)?);
            }
            MfaMode::Off => {}
        }
        Ok(Mfa { mode, proj_r, proj_d, bconv, att_r, att_d })
    }

    pub fn project(&self, g: &mut Graph, store: &ParamStore, g_r: Var, g_d: Var) -> Result<(Var, Var)> {
        Ok((self.proj_r.forward(g, store, g_r)?, self.proj_d.forward(g, store, g_d)?))
    }

    /// Aggregation on already projected, equally shaped features.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, g_s: Var, g_r: Var, g_d: Var) -> Result<Var> {
        for v in [g_r, g_d] {
            if g.shape(v) != g.shape(g_s) {
                return Err(TensorError::ShapeMismatch { op: "mfa", left: g.shape(g_s), right: g.shape(v) }.into());
            }
        }
        match self.mode {
            MfaMode::Off => Ok(g_s),
            MfaMode::Full => {
                let g_rs = g.mul(g_s, g_r)?;
                let g_ds = g.mul(g_s, g_d)?;
                let cat = g.concat_channels(&[g_rs, g_ds])?;
                let g_sc = self.bconv.as_ref().expect("full mfa has bconv").forward(g, store, cat)?;
                Ok(g.add(g_sc, g_s)?)
            }
            MfaMode::Concat => {
                let cat = g.concat_channels(&[g_s, g_r, g_d])?;
                self.bconv.as_ref().expect("concat mfa has bconv").forward(g, store, cat)
            }
            MfaMode::EnhanceFusion => {
                let pre_r = self.att_r.as_ref().expect("enhance mfa has att_r").forward(g, store, g_r)?;
                let a_r = g.sigmoid(pre_r);
                let pre_d = self.att_d.as_ref().expect("enhance mfa has att_d").forward(g, store, g_d)?;
                let a_d = g.sigmoid(pre_d);
                let gated_r = g.mul(g_s, a_r)?;
                let gated_d = g.mul(g_s, a_d)?;
                let sum = g.add(gated_r, gated_d)?;
                Ok(g.add(g_s, sum)?)
            }
        }
    }
}
