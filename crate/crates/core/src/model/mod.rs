//! The SPNet graph: two modality encoders, a CIM fusion chain, RFB-based
//! U-Net decoders per modality and a shared decoder fed through MFA blocks.

mod cim;
mod config;
mod decoder;
mod encoder;
mod layers;
mod mfa;
mod net;
mod rfb;

pub use cim::{Cim, CimTrace};
pub use config::{CimMode, MfaMode, ModelConfig, LEVELS};
pub use decoder::{Decoder, DecoderOutput};
pub use encoder::Encoder;
pub use layers::{Bconv, Conv};
pub use mfa::Mfa;
pub use net::{combine_specific_outputs, probabilities, ForwardOutput, ForwardTrace, SpNet};
pub use rfb::Rfb;

use thiserror::Error;

use crate::tensor::{TensorError, Var};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// Five per-level feature maps, finest first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PyramidFeatures {
    pub levels: Vec<Var>,
}

impl PyramidFeatures {
    /// Level `m`, 1-based.
    pub fn level(&self, m: usize) -> Var {
        self.levels[m - 1]
    }
}
