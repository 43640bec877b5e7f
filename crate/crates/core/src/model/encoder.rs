use crate::tensor::{Graph, ParamStore, Var};

use super::config::LEVELS;
use super::layers::Bconv;
use super::{ModelConfig, ModelError, PyramidFeatures, Result};

/// Stand-in for a pretrained backbone: stacked Bconv blocks producing five
/// levels at the configured strides and widths.
///
/// Each level halves the resolution once per stride octave using stride-2
/// blocks; a level with the same stride as its predecessor gets a single
/// stride-1 block.
#[derive(Debug, Clone)]
pub struct Encoder {
    in_channels: usize,
    input_size: usize,
    stages: Vec<Vec<Bconv>>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, prefix: &str, in_channels: usize, cfg: &ModelConfig) -> Result<Self> {
        let mut stages = Vec::with_capacity(LEVELS);
        let mut in_c = in_channels;
        for m in 1..=LEVELS {
            let out_c = cfg.level_channels(m);
            let octaves = cfg.octaves_between(m);
            let mut blocks = Vec::new();
            if octaves == 0 {
                blocks.push(Bconv::new(store, &format!("{prefix}.l{m}.0"), in_c, out_c, 1)?);
            } else {
                for j in 0..octaves {
                    let c = if j == 0 { in_c } else { out_c };
                    blocks.push(Bconv::new(store, &format!("{prefix}.l{m}.{j}"), c, out_c, 2)?);
                }
            }
            stages.push(blocks);
            in_c = out_c;
        }
        Ok(Encoder { in_channels, input_size: cfg.input_size, stages })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, image: Var) -> Result<PyramidFeatures> {
        let [_, c, h, w] = g.shape(image);
        if c != self.in_channels || h != self.input_size || w != self.input_size {
            return Err(ModelError::Input(format!(
                "encoder expects (N, {}, {s}, {s}), got {:?}",
                self.in_channels,
                g.shape(image),
                s = self.input_size
            )));
        }
        let mut x = image;
        let mut levels = Vec::with_capacity(LEVELS);
        for blocks in &self.stages {
            for b in blocks {
                x = b.forward(g, store, x)?;
            }
            levels.push(x);
        }
        Ok(PyramidFeatures { levels })
    }
}
