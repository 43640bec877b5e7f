//! Ablation sweeps: each named variant is one configuration toggle away from
//! the full model, trained and scored on the same seed and data.

use std::fmt;
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};
use spnet_core::model::{CimMode, MfaMode, ModelConfig};

use crate::config::RunConfig;
use crate::data::Sample;
use crate::train::{fit, predict_maps, train_toy, OutputMap};
use crate::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Concatenation plus one convolution instead of CIM.
    A1,
    /// CIM without the multiply/max fusion.
    A2,
    /// CIM without cross-modal enhancement.
    A3,
    /// CIM without propagation from the previous level.
    A4,
    /// No MFA.
    B1,
    /// Attention-gated enhancement instead of MFA.
    B2,
    /// Concatenation instead of MFA.
    B3,
    /// No modality-specific decoders.
    C1,
    /// Scores the averaged modality-specific maps instead of the shared one.
    C2,
    /// CIM on the coarsest level only.
    #[serde(rename = "CIM1")]
    Cim1,
    /// CIM on the three coarsest levels.
    #[serde(rename = "CIM3")]
    Cim3,
    #[serde(rename = "full")]
    Full,
}

pub const ALL_VARIANTS: [Variant; 12] = [
    Variant::Full,
    Variant::A1,
    Variant::A2,
    Variant::A3,
    Variant::A4,
    Variant::B1,
    Variant::B2,
    Variant::B3,
    Variant::C1,
    Variant::C2,
    Variant::Cim1,
    Variant::Cim3,
];

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::A1 => "A1",
            Variant::A2 => "A2",
            Variant::A3 => "A3",
            Variant::A4 => "A4",
            Variant::B1 => "B1",
            Variant::B2 => "B2",
            Variant::B3 => "B3",
            Variant::C1 => "C1",
            Variant::C2 => "C2",
            Variant::Cim1 => "CIM1",
            Variant::Cim3 => "CIM3",
            Variant::Full => "full",
        }
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        match self {
            Variant::A1 => cfg.cim_mode = CimMode::ConcatOnly,
            Variant::A2 => cfg.cim_mode = CimMode::EnhanceOnly,
            Variant::A3 => cfg.cim_mode = CimMode::FuseOnly,
            Variant::A4 => cfg.cim_mode = CimMode::NoPropagation,
            Variant::B1 => cfg.mfa_mode = MfaMode::Off,
            Variant::B2 => cfg.mfa_mode = MfaMode::EnhanceFusion,
            Variant::B3 => cfg.mfa_mode = MfaMode::Concat,
            Variant::C1 => cfg.specific_decoders = false,
            Variant::Cim1 => cfg.cim_levels = 1,
            Variant::Cim3 => cfg.cim_levels = 3,
            Variant::C2 | Variant::Full => {}
        }
        cfg
    }

    pub fn output(self) -> OutputMap {
        match self {
            Variant::C2 => OutputMap::CombinedSpecific,
            _ => OutputMap::Shared,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        ALL_VARIANTS
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let known: Vec<&str> = ALL_VARIANTS.iter().map(|v| v.name()).collect();
                HarnessError::validation(format!("unknown variant {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub s_measure: f64,
    pub mae: f64,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seed: u64,
    pub epochs: usize,
    pub samples: usize,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    /// Fixed-width text table: variant, S-measure, MAE.
    pub fn table(&self) -> String {
        let mut s = format!("{:<8}{:>10}{:>10}\n", "variant", "S", "MAE");
        for r in &self.rows {
            s.push_str(&format!("{:<8}{:>10.4}{:>10.4}\n", r.variant.name(), r.s_measure, r.mae));
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "s_measure", "mae", "final_loss"])?;
        for r in &self.rows {
            w.write_record([r.variant.name().to_string(), r.s_measure.to_string(), r.mae.to_string(), r.final_loss.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::validation(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Parses a comma-separated variant list; duplicates are dropped.
pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    let mut out: Vec<Variant> = Vec::new();
    for part in list.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let v = part.parse()?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(HarnessError::validation("no variants given"));
    }
    Ok(out)
}

pub fn ablate(base: &RunConfig, variants: &[Variant], data: &[Sample]) -> Result<AblationReport> {
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        info!("variant {v}");
        let run = RunConfig { model: v.apply(&base.model), ..base.clone() };
        let trained = train_toy(&run, data, None)?;
        let preds = spnet_core::tensor::precision::scoped(run.precision, || {
            predict_maps(&trained.model, data, run.batch_size, v.output())
        })?;
        let f = fit(data, &preds)?;
        rows.push(AblationRow { variant: v, s_measure: f.s_measure, mae: f.mae, final_loss: trained.report.final_loss });
    }
    Ok(AblationReport { seed: base.seed, epochs: base.epochs, samples: data.len(), rows })
}
