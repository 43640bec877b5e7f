use crate::tensor::{Graph, ParamStore, Var};

use super::layers::Conv;
use super::Result;

pub const RFB_DILATIONS: [usize; 3] = [1, 3, 5];

/// Receptive field block: a 1x1 branch plus three 1x1 -> dilated 3x3 branches
/// (dilation 1, 3, 5), concatenated, fused by 1x1 conv and added to a 1x1
/// projection of the input, then ReLU.
#[derive(Debug, Clone)]
pub struct Rfb {
    branch0: Conv,
    branches: Vec<(Conv, Conv)>,
    fuse: Conv,
    residual: Conv,
}

impl Rfb {
    pub fn new(store: &mut ParamStore, prefix: &str, in_c: usize, out_c: usize) -> Result<Self> {
        let branch0 = Conv::pointwise(store, &format!("{prefix}.b0"), in_c, out_c)?;
        let branches = RFB_DILATIONS
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                let reduce = Conv::pointwise(store, &format!("{prefix}.b{}.reduce", i + 1), in_c, out_c)?;
                let dilated = Conv::new(store, &format!("{prefix}.b{}.dilated", i + 1), out_c, out_c, 3, 1, d, true)?;
                Ok((reduce, dilated))
            })
            .collect::<Result<Vec<_>>>()?;
        let fuse = Conv::pointwise(store, &format!("{prefix}.fuse"), 4 * out_c, out_c)?;
        let residual = Conv::pointwise(store, &format!("{prefix}.residual"), in_c, out_c)?;
        Ok(Rfb { branch0, branches, fuse, residual })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let mut outs = vec![self.branch0.forward(g, store, x)?];
        for (reduce, dilated) in &self.branches {
            let r = reduce.forward(g, store, x)?;
            outs.push(dilated.forward(g, store, r)?);
        }
        let cat = g.concat_channels(&outs)?;
        let fused = self.fuse.forward(g, store, cat)?;
        let res = self.residual.forward(g, store, x)?;
        let sum = g.add(fused, res)?;
        Ok(g.relu(sum))
    }
}
