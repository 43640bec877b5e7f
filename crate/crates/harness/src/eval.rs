//! Directory evaluation and attribute-grouped evaluation.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spnet_core::map::GrayMap;
use spnet_core::metrics::{aggregate, evaluate_image, EvalOptions, EvalPair, MetricsError, MetricsReport, THRESHOLDS};

use crate::attributes::{count_label, AttributeRecord, ScaleBin, Sidecar};
use crate::{io, HarnessError, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Json,
    Csv,
    #[default]
    Both,
}

impl Emit {
    fn json(self) -> bool {
        matches!(self, Emit::Json | Emit::Both)
    }

    fn csv(self) -> bool {
        matches!(self, Emit::Csv | Emit::Both)
    }
}

/// A named prediction/ground-truth pair; the prediction is resized to the
/// mask when their sizes differ.
pub struct LoadedPair {
    pub name: String,
    pub pair: EvalPair,
}

pub fn load_pairs(pred_dir: &Path, gt_dir: &Path) -> Result<Vec<LoadedPair>> {
    let files = io::pair_by_stem(pred_dir, gt_dir)?;
    files
        .into_par_iter()
        .map(|(name, pred_path, gt_path)| {
            let pred = io::load_map(&pred_path)?;
            let gt = io::load_mask(&gt_path)?;
            let pair = EvalPair::aligned(pred, gt).map_err(|e| HarnessError::validation(format!("{name}: {e}")))?;
            Ok(LoadedPair { name, pair })
        })
        .collect()
}

pub fn evaluate_pairs(pairs: &[LoadedPair], opts: &EvalOptions) -> Result<MetricsReport, MetricsError> {
    let evals = pairs.par_iter().map(|p| evaluate_image(&p.name, &p.pair, opts)).collect();
    aggregate(evals, opts.e_variant)
}

pub fn evaluate_dirs(pred_dir: &Path, gt_dir: &Path, opts: &EvalOptions) -> Result<MetricsReport> {
    Ok(evaluate_pairs(&load_pairs(pred_dir, gt_dir)?, opts)?)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn metrics_csv(report: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "s_measure", "f_max", "e_measure", "mae"])?;
    for m in &report.images {
        w.write_record([m.name.clone(), m.s_measure.to_string(), opt(m.f_max), m.e_measure.to_string(), m.mae.to_string()])?;
    }
    let a = &report.mean;
    w.write_record(["mean".to_string(), a.s_measure.to_string(), a.f_max.to_string(), a.e_measure.to_string(), a.mae.to_string()])?;
    finish(w)
}

pub fn curves_csv(report: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["threshold", "precision", "recall", "f_measure"])?;
    for t in 0..THRESHOLDS {
        w.write_record([t.to_string(), report.precision[t].to_string(), report.recall[t].to_string(), report.f_curve[t].to_string()])?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| HarnessError::validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes `metrics.json` and/or `metrics.csv` plus `curves.csv`.
pub fn write_report(report: &MetricsReport, out: &Path, emit: Emit) -> Result<()> {
    io::create_dir(out)?;
    if emit.json() {
        io::write_json(out.join("metrics.json"), report)?;
    }
    if emit.csv() {
        io::write_file(out.join("metrics.csv"), metrics_csv(report)?)?;
        io::write_file(out.join("curves.csv"), curves_csv(report)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedReport {
    pub attribute: String,
    pub records: Vec<AttributeRecord>,
    pub groups: BTreeMap<String, MetricsReport>,
    /// Groups left out and why.
    pub notes: Vec<String>,
}

/// Attribute records for every pair, with sidecar labels attached. Every
/// image must appear in the sidecar when one is given.
pub fn attribute_records(pairs: &[LoadedPair], sidecar: Option<&Sidecar>) -> Result<Vec<AttributeRecord>> {
    let mut missing = Vec::new();
    let records = pairs
        .iter()
        .map(|p| {
            let mut rec = AttributeRecord::from_mask(&p.name, p.pair.gt());
            if let Some(sc) = sidecar {
                match sc.rows.get(&p.name) {
                    Some(labels) => rec.labels = labels.clone(),
                    None => missing.push(p.name.clone()),
                }
            }
            rec
        })
        .collect();
    if !missing.is_empty() {
        return Err(HarnessError::validation(format!("images missing from sidecar: {}", missing.join(", "))));
    }
    Ok(records)
}

/// Evaluates each group of images sharing a value of `attribute` (`count`,
/// `scale`, or a sidecar column).
pub fn attr_eval(pairs: &[LoadedPair], attribute: &str, sidecar: Option<&Sidecar>, opts: &EvalOptions) -> Result<GroupedReport> {
    let builtin: Option<Vec<&str>> = match attribute {
        "count" => Some(vec![count_label(0), count_label(1), count_label(2)]),
        "scale" => Some([ScaleBin::Small, ScaleBin::Medium, ScaleBin::Large].map(ScaleBin::label).to_vec()),
        key => {
            let sc = sidecar.ok_or_else(|| {
                HarnessError::validation(format!("attribute {key:?} is neither count nor scale and no sidecar was given"))
            })?;
            if !sc.keys.iter().any(|k| k == key) {
                return Err(HarnessError::validation(format!("sidecar has no column {key:?}")));
            }
            None
        }
    };
    if pairs.is_empty() {
        return Err(HarnessError::validation("no matched pairs"));
    }
    let records = attribute_records(pairs, sidecar)?;
    let mut members: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        let label = rec.group(attribute).expect("attribute validated above");
        members.entry(label).or_default().push(i);
    }
    let mut notes = Vec::new();
    if let Some(labels) = builtin {
        for label in labels {
            if !members.contains_key(label) {
                notes.push(format!("group {label}: no images"));
            }
        }
    }
    let mut groups = BTreeMap::new();
    for (label, idx) in members {
        let evals = idx.par_iter().map(|&i| evaluate_image(&pairs[i].name, &pairs[i].pair, opts)).collect();
        match aggregate(evals, opts.e_variant) {
            Ok(report) => {
                groups.insert(label, report);
            }
            Err(MetricsError::NoEvaluablePairs) => {
                notes.push(format!("group {label}: {} images, none with foreground", idx.len()));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(GroupedReport { attribute: attribute.to_string(), records, groups, notes })
}

pub fn grouped_csv(report: &GroupedReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "images", "skipped", "s_measure", "f_max", "e_measure", "mae"])?;
    for (label, r) in &report.groups {
        let a = &r.mean;
        w.write_record([
            label.clone(),
            r.images.len().to_string(),
            r.skipped.to_string(),
            a.s_measure.to_string(),
            a.f_max.to_string(),
            a.e_measure.to_string(),
            a.mae.to_string(),
        ])?;
    }
    finish(w)
}

pub fn write_grouped(report: &GroupedReport, out: &Path, emit: Emit) -> Result<()> {
    io::create_dir(out)?;
    if emit.json() {
        io::write_json(out.join("attr_metrics.json"), report)?;
    }
    if emit.csv() {
        io::write_file(out.join("attr_metrics.csv"), grouped_csv(report)?)?;
    }
    Ok(())
}

/// Prediction map resized to `gt`'s size; exposed for callers that build
/// pairs in memory.
pub fn aligned_pair(name: &str, pred: GrayMap, gt: GrayMap) -> Result<LoadedPair> {
    let pair = EvalPair::aligned(pred, gt).map_err(|e| HarnessError::validation(format!("{name}: {e}")))?;
    Ok(LoadedPair { name: name.to_string(), pair })
}
