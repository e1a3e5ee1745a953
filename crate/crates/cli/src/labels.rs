//! Labels file: sample names with class labels and optional ground truth.
//!
//! ```json
//! {"samples": [
//!   {"name": "case01", "label": 1, "mask": "masks/case01"},
//!   {"name": "case02", "label": 0},
//!   {"name": "case03", "label": true, "box": {"min": [4, 5, 6], "max": [9, 9, 12]}}
//! ]}
//! ```
//!
//! Mask paths are relative to the labels file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tomorecon_core::postprocess::{BoundingBox, GroundTruth, Mask};
use tomorecon_core::volume::{load_volume, volume_paths};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LabelValue {
    Bool(bool),
    Int(i64),
}

#[derive(Debug, Deserialize)]
struct BoxEntry {
    min: [usize; 3],
    max: [usize; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    label: LabelValue,
    #[serde(default)]
    mask: Option<PathBuf>,
    #[serde(default, rename = "box")]
    bbox: Option<BoxEntry>,
}

#[derive(Debug, Deserialize)]
struct LabelsFile {
    samples: Vec<Entry>,
}

#[derive(Debug)]
pub struct LabelEntry {
    pub label: i64,
    mask: Option<PathBuf>,
    bbox: Option<BoundingBox>,
}

impl LabelEntry {
    pub fn positive(&self) -> bool {
        self.label != 0
    }

    /// Loads the mask or box ground truth, if any.
    pub fn truth(&self) -> CliResult<Option<GroundTruth>> {
        if let Some(path) = &self.mask {
            let volume = load_volume(path)?;
            return Ok(Some(GroundTruth::Mask(Mask::from_volume(&volume))));
        }
        Ok(self.bbox.map(GroundTruth::Box))
    }
}

pub fn load_labels(path: &Path) -> CliResult<BTreeMap<String, LabelEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let file: LabelsFile =
        serde_json::from_str(&text).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut out = BTreeMap::new();
    for entry in file.samples {
        if entry.mask.is_some() && entry.bbox.is_some() {
            return Err(Failure::invalid(format!("{}: give a mask or a box, not both", entry.name)));
        }
        let label = match entry.label {
            LabelValue::Bool(b) => b as i64,
            LabelValue::Int(i) => i,
        };
        let bbox = match entry.bbox {
            Some(b) => Some(BoundingBox::new(b.min, b.max)?),
            None => None,
        };
        let parsed = LabelEntry {
            label,
            mask: entry.mask.map(|m| base.join(m)),
            bbox,
        };
        if out.insert(entry.name.clone(), parsed).is_some() {
            return Err(Failure::invalid(format!("duplicate sample {:?} in labels", entry.name)));
        }
    }
    Ok(out)
}

/// Sample name of a volume path: the file name without `.json` / `.bin`.
pub fn sample_name(path: &Path) -> String {
    let (header, _) = volume_paths(path);
    header
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}
