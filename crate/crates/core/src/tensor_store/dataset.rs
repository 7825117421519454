use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{load_tensor, FeatureMap, LabelMask, LogitMap, OodMask};
use crate::error::{Error, Result};

pub const DEFAULT_IGNORE_VALUE: i32 = 255;

pub const FEATURES_DIR: &str = "features";
pub const LOGITS_DIR: &str = "logits";
pub const LABELS_DIR: &str = "labels";
pub const OOD_MASKS_DIR: &str = "ood_masks";
pub const MANIFEST_FILE: &str = "manifest.json";

fn default_ignore() -> i32 {
    DEFAULT_IGNORE_VALUE
}

/// `manifest.json` at the dataset root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub num_classes: usize,
    #[serde(default = "default_ignore")]
    pub ignore_value: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
}

impl DatasetManifest {
    pub fn load(root: &Path) -> Result<Self> {
        let path = root.join(MANIFEST_FILE);
        let text = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_slice(&text)?;
        if manifest.num_classes < 2 {
            return Err(Error::Validation(format!(
                "{}: num_classes must be at least 2",
                path.display()
            )));
        }
        Ok(manifest)
    }

    pub fn save(&self, root: &Path) -> Result<()> {
        let path = root.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
    }
}

/// One image's files. Features and logits are always present; labels and
/// anomaly masks are optional.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub features: PathBuf,
    pub logits: PathBuf,
    pub labels: Option<PathBuf>,
    pub ood_mask: Option<PathBuf>,
}

impl Sample {
    pub fn load_features(&self) -> Result<FeatureMap> {
        load_tensor(&self.features)
    }

    pub fn load_logits(&self, manifest: &DatasetManifest) -> Result<LogitMap> {
        let logits: LogitMap = load_tensor(&self.logits)?;
        if logits.num_classes() != manifest.num_classes {
            return Err(Error::Validation(format!(
                "{}: {} logit channels but the dataset declares {} classes",
                self.logits.display(),
                logits.num_classes(),
                manifest.num_classes
            )));
        }
        Ok(logits)
    }

    pub fn load_labels(&self, manifest: &DatasetManifest) -> Result<Option<LabelMask>> {
        let Some(path) = &self.labels else {
            return Ok(None);
        };
        let labels = load_tensor::<LabelMask>(path)?.with_ignore_value(manifest.ignore_value);
        labels
            .validate_classes(manifest.num_classes)
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))?;
        Ok(Some(labels))
    }

    pub fn load_ood_mask(&self) -> Result<Option<OodMask>> {
        self.ood_mask.as_deref().map(load_tensor).transpose()
    }

    /// Full image resolution, taken from the logits.
    pub fn image_size(&self, manifest: &DatasetManifest) -> Result<(usize, usize)> {
        let logits = self.load_logits(manifest)?;
        Ok((logits.height(), logits.width()))
    }
}

#[derive(Debug, Clone)]
pub struct DatasetScan {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
    /// Images skipped because a required file is missing.
    pub warnings: Vec<String>,
}

impl DatasetScan {
    pub fn has_labels(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.labels.is_some())
    }

    pub fn get(&self, id: &str) -> Option<&Sample> {
        self.samples
            .binary_search_by(|s| s.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.samples[i])
    }
}

fn list_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let mut stems = BTreeMap::new();
    if !dir.is_dir() {
        return Ok(stems);
    }
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("npy") {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.insert(stem.to_string(), path);
        }
    }
    Ok(stems)
}

/// Lists the samples under `root`, sorted by image id.
///
/// The result depends only on the directory contents. Images with features
/// but no logits (or the reverse) are reported in `warnings`.
pub fn scan_dataset(root: &Path) -> Result<DatasetScan> {
    let manifest = DatasetManifest::load(root)?;
    let features = list_stems(&root.join(FEATURES_DIR))?;
    let logits = list_stems(&root.join(LOGITS_DIR))?;
    let labels = list_stems(&root.join(LABELS_DIR))?;
    let masks = list_stems(&root.join(OOD_MASKS_DIR))?;

    let ids: BTreeSet<&String> = features
        .keys()
        .chain(logits.keys())
        .chain(labels.keys())
        .chain(masks.keys())
        .collect();

    let mut samples = Vec::new();
    let mut warnings = Vec::new();
    for id in ids {
        match (features.get(id), logits.get(id)) {
            (Some(f), Some(l)) => samples.push(Sample {
                id: id.clone(),
                features: f.clone(),
                logits: l.clone(),
                labels: labels.get(id).cloned(),
                ood_mask: masks.get(id).cloned(),
            }),
            (f, _) => {
                let missing = if f.is_none() {
                    FEATURES_DIR
                } else {
                    LOGITS_DIR
                };
                warnings.push(format!("{id}: missing {missing}/{id}.npy, sample skipped"));
            }
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    if samples.is_empty() {
        return Err(Error::NoSamples(root.to_path_buf()));
    }
    Ok(DatasetScan {
        root: root.to_path_buf(),
        manifest,
        samples,
        warnings,
    })
}
