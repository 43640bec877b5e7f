use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::tensor::Shape;

pub const LEVELS: usize = 5;

/// Fusion performed by the cross-enhanced integration module.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CimMode {
    /// Channel reduction, cross-enhancement, multiply/max fusion and
    /// propagation of the previous level's output.
    #[default]
    Full,
    /// Concatenate both modalities and apply one 3x3 convolution.
    ConcatOnly,
    /// Cross-enhancement, then concatenation and one Bconv.
    EnhanceOnly,
    /// Multiply/max fusion on unenhanced features.
    FuseOnly,
    /// `Full` without the cross-level path.
    NoPropagation,
}

/// How modality-specific decoder features enter the shared decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MfaMode {
    #[default]
    Full,
    Off,
    /// Sigmoid attention from each modality gates the shared feature.
    EnhanceFusion,
    /// `Bconv(concat(g_s, g_r, g_d))`.
    Concat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_size: usize,
    pub channels: [usize; LEVELS],
    pub level_strides: [usize; LEVELS],
    pub cim_mode: CimMode,
    pub cim_levels: usize,
    pub mfa_mode: MfaMode,
    pub specific_decoders: bool,
    pub seed: u64,
    /// Shared-decoder levels (1-based) that receive an MFA block.
    pub mfa_levels: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 64,
            channels: [4, 8, 16, 32, 64],
            level_strides: [4, 4, 8, 16, 32],
            cim_mode: CimMode::Full,
            cim_levels: 5,
            mfa_mode: MfaMode::Full,
            specific_decoders: true,
            seed: 0,
            mfa_levels: vec![1, 2, 3, 4, 5],
        }
    }
}

fn log2_exact(v: usize) -> Option<usize> {
    v.is_power_of_two().then(|| v.trailing_zeros() as usize)
}

impl ModelConfig {
    /// Backbone-scale widths at 352 x 352 input.
    pub fn backbone_scale() -> Self {
        ModelConfig { input_size: 352, channels: [64, 256, 512, 1024, 2048], ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.input_size == 0 {
            return bad("input_size must be positive".into());
        }
        if self.channels.iter().any(|&c| c == 0) {
            return bad(format!("channels must be strictly positive, got {:?}", self.channels));
        }
        if self.level_strides.iter().any(|&s| s == 0) {
            return bad("level_strides must be positive".into());
        }
        if self.level_strides.windows(2).any(|w| w[1] < w[0]) {
            return bad(format!("level_strides must be non-decreasing, got {:?}", self.level_strides));
        }
        if log2_exact(self.level_strides[0]).is_none()
            || self.level_strides.windows(2).any(|w| w[1] % w[0] != 0 || log2_exact(w[1] / w[0]).is_none())
        {
            return bad(format!(
                "level_strides must be powers of two with power-of-two ratios, got {:?}",
                self.level_strides
            ));
        }
        for &s in &self.level_strides {
            if self.input_size % s != 0 {
                return bad(format!("input_size {} is not divisible by stride {s}", self.input_size));
            }
        }
        if ![1, 3, 5].contains(&self.cim_levels) {
            return bad(format!("cim_levels must be 1, 3 or 5, got {}", self.cim_levels));
        }
        if let Some(&l) = self.mfa_levels.iter().find(|&&l| !(1..=LEVELS).contains(&l)) {
            return bad(format!("mfa_levels entries must be in 1..=5, got {l}"));
        }
        Ok(())
    }

    /// Spatial side length of level `m` (1-based).
    pub fn level_size(&self, m: usize) -> usize {
        self.input_size / self.level_strides[m - 1]
    }

    pub fn level_channels(&self, m: usize) -> usize {
        self.channels[m - 1]
    }

    /// Expected `(N, C_m, H_m, W_m)` of every pyramid level.
    pub fn level_shapes(&self, batch: usize) -> [Shape; LEVELS] {
        std::array::from_fn(|i| {
            let s = self.level_size(i + 1);
            [batch, self.channels[i], s, s]
        })
    }

    /// First level (1-based) fused by a CIM; lower levels use plain
    /// concatenation fusion.
    pub fn first_cim_level(&self) -> usize {
        LEVELS - self.cim_levels + 1
    }

    /// Number of 2x resampling steps between level `m - 1` and level `m`
    /// (level 0 is the input image).
    pub(crate) fn octaves_between(&self, m: usize) -> usize {
        let prev = if m == 1 { 1 } else { self.level_strides[m - 2] };
        log2_exact(self.level_strides[m - 1] / prev).expect("validated stride ratio")
    }

    pub(crate) fn uses_mfa_at(&self, m: usize) -> bool {
        self.specific_decoders && self.mfa_mode != MfaMode::Off && self.mfa_levels.contains(&m)
    }
}
