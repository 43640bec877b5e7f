//! Per-image attributes for grouped evaluation: object count, object scale
//! and labels from a sidecar CSV.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use spnet_core::map::GrayMap;

use crate::{HarnessError, Result};

/// Ratios below this are small objects.
pub const SMALL_BELOW: f64 = 0.1;
/// Ratios above this are large objects.
pub const LARGE_ABOVE: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleBin {
    Small,
    Medium,
    Large,
}

impl ScaleBin {
    pub fn from_ratio(ratio: f64) -> Self {
        if ratio < SMALL_BELOW {
            ScaleBin::Small
        } else if ratio > LARGE_ABOVE {
            ScaleBin::Large
        } else {
            ScaleBin::Medium
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScaleBin::Small => "small",
            ScaleBin::Medium => "medium",
            ScaleBin::Large => "large",
        }
    }
}

/// Number of 8-connected foreground components (pixels >= 0.5).
pub fn connected_components(gt: &GrayMap) -> usize {
    let (h, w) = gt.dims();
    let fg = |y: usize, x: usize| gt.get(y, x) >= 0.5;
    let mut seen = vec![false; h * w];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if seen[start] || !fg(start / w, start % w) {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (y, x) = (i / w, i % w);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let j = ny * w + nx;
                    if !seen[j] && fg(ny, nx) {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
    }
    count
}

/// Foreground fraction of the mask and its scale bin.
pub fn object_scale(gt: &GrayMap) -> (f64, ScaleBin) {
    let fg = gt.data().iter().filter(|&&v| v >= 0.5).count();
    let ratio = fg as f64 / gt.len() as f64;
    (ratio, ScaleBin::from_ratio(ratio))
}

pub fn count_label(count: usize) -> &'static str {
    match count {
        0 => "empty",
        1 => "single",
        _ => "multiple",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeRecord {
    pub id: String,
    pub object_count: usize,
    pub scale_ratio: f64,
    pub scale_bin: ScaleBin,
    pub labels: BTreeMap<String, String>,
}

impl AttributeRecord {
    pub fn from_mask(id: &str, gt: &GrayMap) -> Self {
        let (scale_ratio, scale_bin) = object_scale(gt);
        AttributeRecord {
            id: id.to_string(),
            object_count: connected_components(gt),
            scale_ratio,
            scale_bin,
            labels: BTreeMap::new(),
        }
    }

    /// Group label for `attribute`: `count`, `scale`, or a sidecar column.
    pub fn group(&self, attribute: &str) -> Option<String> {
        match attribute {
            "count" => Some(count_label(self.object_count).to_string()),
            "scale" => Some(self.scale_bin.label().to_string()),
            key => self.labels.get(key).cloned(),
        }
    }
}

/// Sidecar table: a header row whose first column is the image stem, then one
/// column per label key. Values are kept verbatim.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sidecar {
    pub keys: Vec<String>,
    pub rows: BTreeMap<String, BTreeMap<String, String>>,
}

impl Sidecar {
    pub fn from_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 {
            return Err(HarnessError::validation("sidecar needs a stem column and at least one label column"));
        }
        let keys: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut rows = BTreeMap::new();
        for record in rdr.records() {
            let record = record?;
            let stem = record.get(0).unwrap_or_default().to_string();
            let labels = keys.iter().cloned().zip(record.iter().skip(1).map(str::to_string)).collect();
            if rows.insert(stem.clone(), labels).is_some() {
                return Err(HarnessError::validation(format!("sidecar lists {stem} twice")));
            }
        }
        Ok(Sidecar { keys, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_reader(file)
    }
}
