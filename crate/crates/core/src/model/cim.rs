use crate::tensor::{Graph, ParamStore, Var};

use super::layers::{Bconv, Conv};
use super::{CimMode, ModelError, Result};

/// Cross-enhanced integration module for one pyramid level.
///
/// In `Full` mode, with `f_r`, `f_d` the (channel-reduced) modality features:
///
/// ```text
/// w_r = sigmoid(conv3(f_r))          w_d = sigmoid(conv3(f_d))
/// f_r' = f_r + f_r * w_d             f_d' = f_d + f_d * w_r
/// p_mul = Bconv(f_r') * Bconv(f_d')  p_max = max(Bconv(f_r'), Bconv(f_d'))
/// p_cat1 = Bconv([p_mul, p_max])
/// out = Bconv([p_cat1, pool(prev)])  or p_cat1 without a previous level
/// ```
///
/// The depth attention map is computed from the depth feature. Level 1 skips
/// the 1x1 channel reduction.
#[derive(Debug, Clone)]
pub struct Cim {
    pub level: usize,
    pub mode: CimMode,
    channels: usize,
    reduce_r: Option<Conv>,
    reduce_d: Option<Conv>,
    att_r: Option<Conv>,
    att_d: Option<Conv>,
    bconv_r: Option<Bconv>,
    bconv_d: Option<Bconv>,
    bconv_cat: Option<Bconv>,
    bconv_prev: Option<Bconv>,
    concat_conv: Option<Conv>,
}

/// Intermediate values of one CIM evaluation.
#[derive(Debug, Clone, Copy)]
pub struct CimTrace {
    pub reduced_r: Var,
    pub reduced_d: Var,
    pub att_r: Option<Var>,
    pub att_d: Option<Var>,
    pub enhanced_r: Option<Var>,
    pub enhanced_d: Option<Var>,
    pub p_mul: Option<Var>,
    pub p_max: Option<Var>,
    pub p_cat1: Option<Var>,
    pub out: Var,
}

fn enhances(mode: CimMode) -> bool {
    matches!(mode, CimMode::Full | CimMode::EnhanceOnly | CimMode::NoPropagation)
}

fn fuses(mode: CimMode) -> bool {
    matches!(mode, CimMode::Full | CimMode::FuseOnly | CimMode::NoPropagation)
}

fn propagates(mode: CimMode) -> bool {
    matches!(mode, CimMode::Full | CimMode::EnhanceOnly | CimMode::FuseOnly)
}

impl Cim {
    /// `prev_channels` is the width of the previous level's output when this
    /// level receives one; it is ignored by modes without propagation.
    pub fn new(
        store: &mut ParamStore,
        level: usize,
        mode: CimMode,
        channels: usize,
        prev_channels: Option<usize>,
    ) -> Result<Self> {
        let p = format!("cim.{level}");
        let mut cim = Cim {
            level,
            mode,
            channels,
            reduce_r: None,
            reduce_d: None,
            att_r: None,
            att_d: None,
            bconv_r: None,
            bconv_d: None,
            bconv_cat: None,
            bconv_prev: None,
            concat_conv: None,
        };
        if mode == CimMode::ConcatOnly {
            cim.concat_conv = Some(Conv::same3x3(store, &format!("{p}.concat"), 2 * channels, channels)?);
            return Ok(cim);
        }
        let half = if level == 1 { channels } else { (channels / 2).max(1) };
        if level != 1 {
            cim.reduce_r = Some(Conv::pointwise(store, &format!("{p}.reduce_r"), channels, half)?);
            cim.reduce_d = Some(Conv::pointwise(store, &format!("{p}.reduce_d"), channels, half)?);
        }
        if enhances(mode) {
            cim.att_r = Some(Conv::same3x3(store, &format!("{p}.wconv_r"), half, half)?);
            cim.att_d = Some(Conv::same3x3(store, &format!("{p}.wconv_d"), half, half)?);
        }
        if fuses(mode) {
            cim.bconv_r = Some(Bconv::new(store, &format!("{p}.bconv_r"), half, half, 1)?);
            cim.bconv_d = Some(Bconv::new(store, &format!("{p}.bconv_d"), half, half, 1)?);
        }
        cim.bconv_cat = Some(Bconv::new(store, &format!("{p}.bconv_cat"), 2 * half, channels, 1)?);
        if let (true, Some(pc)) = (propagates(mode), prev_channels) {
            cim.bconv_prev = Some(Bconv::new(store, &format!("{p}.bconv_prev"), channels + pc, channels, 1)?);
        }
        Ok(cim)
    }

    /// Whether [`Cim::forward`] must be given the previous level's output.
    pub fn expects_prev(&self) -> bool {
        self.bconv_prev.is_some()
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f_r: Var,
        f_d: Var,
        prev: Option<Var>,
    ) -> Result<CimTrace> {
        let (sr, sd) = (g.shape(f_r), g.shape(f_d));
        if sr != sd {
            return Err(crate::tensor::TensorError::ShapeMismatch { op: "cim", left: sr, right: sd }.into());
        }
        if sr[1] != self.channels {
            return Err(ModelError::Input(format!(
                "cim level {} expects {} channels, got {:?}",
                self.level, self.channels, sr
            )));
        }
        if prev.is_some() != self.expects_prev() {
            return Err(ModelError::Input(format!(
                "cim level {} {} a previous-level input",
                self.level,
                if self.expects_prev() { "requires" } else { "does not take" }
            )));
        }

        if let Some(conv) = &self.concat_conv {
            let cat = g.concat_channels(&[f_r, f_d])?;
            let out = conv.forward(g, store, cat)?;
            return Ok(CimTrace {
                reduced_r: f_r,
                reduced_d: f_d,
                att_r: None,
                att_d: None,
                enhanced_r: None,
                enhanced_d: None,
                p_mul: None,
                p_max: None,
                p_cat1: None,
                out,
            });
        }

        let reduced_r = match &self.reduce_r {
            Some(c) => c.forward(g, store, f_r)?,
            None => f_r,
        };
        let reduced_d = match &self.reduce_d {
            Some(c) => c.forward(g, store, f_d)?,
            None => f_d,
        };

        let (mut att_r, mut att_d, mut enhanced_r, mut enhanced_d) = (None, None, None, None);
        let (e_r, e_d) = match (&self.att_r, &self.att_d) {
            (Some(ar), Some(ad)) => {
                let pre_r = ar.forward(g, store, reduced_r)?;
                let w_r = g.sigmoid(pre_r);
                let pre_d = ad.forward(g, store, reduced_d)?;
                let w_d = g.sigmoid(pre_d);
                let gated_r = g.mul(reduced_r, w_d)?;
                let e_r = g.add(reduced_r, gated_r)?;
                let gated_d = g.mul(reduced_d, w_r)?;
                let e_d = g.add(reduced_d, gated_d)?;
                (att_r, att_d, enhanced_r, enhanced_d) = (Some(w_r), Some(w_d), Some(e_r), Some(e_d));
                (e_r, e_d)
            }
            _ => (reduced_r, reduced_d),
        };

        let (mut p_mul, mut p_max) = (None, None);
        let p_cat = match (&self.bconv_r, &self.bconv_d) {
            (Some(br), Some(bd)) => {
                let b_r = br.forward(g, store, e_r)?;
                let b_d = bd.forward(g, store, e_d)?;
                let mul = g.mul(b_r, b_d)?;
                let max = g.max(b_r, b_d)?;
                (p_mul, p_max) = (Some(mul), Some(max));
                g.concat_channels(&[mul, max])?
            }
            _ => g.concat_channels(&[e_r, e_d])?,
        };
        let p_cat1 = self.bconv_cat.as_ref().expect("non-concat modes have bconv_cat").forward(g, store, p_cat)?;

        let out = match (prev, &self.bconv_prev) {
            (Some(prev), Some(bp)) => {
                let aligned = align_to(g, prev, g.shape(p_cat1))?;
                let cat = g.concat_channels(&[p_cat1, aligned])?;
                bp.forward(g, store, cat)?
            }
            _ => p_cat1,
        };

        Ok(CimTrace {
            reduced_r,
            reduced_d,
            att_r,
            att_d,
            enhanced_r,
            enhanced_d,
            p_mul,
            p_max,
            p_cat1: Some(p_cat1),
            out,
        })
    }
}

/// Average-pools `prev` by 2x steps until it matches the spatial size of
/// `target`.
fn align_to(g: &mut Graph, prev: Var, target: crate::tensor::Shape) -> Result<Var> {
    let mut x = prev;
    let sp = g.shape(prev);
    if sp[0] != target[0] {
        return Err(ModelError::Input(format!("previous CIM output batch {} != {}", sp[0], target[0])));
    }
    while g.shape(x)[2] > target[2] && g.shape(x)[3] > target[3] {
        x = g.downsample_avg_2x(x)?;
    }
    let s = g.shape(x);
    if s[2] != target[2] || s[3] != target[3] {
        return Err(ModelError::Input(format!("previous CIM output {sp:?} cannot be pooled to {target:?}")));
    }
    Ok(x)
}
