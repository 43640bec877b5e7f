use crate::tensor::{Graph, ParamId, ParamStore, Var};

use super::Result;

/// Convolution with its own parameters. Padding keeps the spatial size for
/// stride 1 (`dilation * (k / 2)`).
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub dilation: usize,
}

impl Conv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        in_c: usize,
        out_c: usize,
        k: usize,
        stride: usize,
        dilation: usize,
        bias: bool,
    ) -> Result<Self> {
        let weight = store.init_conv_weight(&format!("{name}.weight"), out_c, in_c, k)?;
        let bias = if bias { Some(store.init_channel_vector(&format!("{name}.bias"), out_c, 0.0)?) } else { None };
        Ok(Conv { weight, bias, stride, dilation })
    }

    pub fn pointwise(store: &mut ParamStore, name: &str, in_c: usize, out_c: usize) -> Result<Self> {
        Self::new(store, name, in_c, out_c, 1, 1, 1, true)
    }

    pub fn same3x3(store: &mut ParamStore, name: &str, in_c: usize, out_c: usize) -> Result<Self> {
        Self::new(store, name, in_c, out_c, 3, 1, 1, true)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|b| g.param(store, b));
        let k = g.shape(w)[2];
        Ok(g.conv2d_dilated(x, w, b, self.stride, self.dilation * (k / 2), self.dilation)?)
    }
}

/// 3x3 convolution, batch normalization, ReLU.
#[derive(Debug, Clone)]
pub struct Bconv {
    pub weight: ParamId,
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stride: usize,
}

impl Bconv {
    pub fn new(store: &mut ParamStore, name: &str, in_c: usize, out_c: usize, stride: usize) -> Result<Self> {
        Ok(Bconv {
            weight: store.init_conv_weight(&format!("{name}.weight"), out_c, in_c, 3)?,
            gamma: store.init_channel_vector(&format!("{name}.gamma"), out_c, 1.0)?,
            beta: store.init_channel_vector(&format!("{name}.beta"), out_c, 0.0)?,
            stride,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        Ok(g.bconv(x, w, gamma, beta, self.stride, 1)?)
    }
}
