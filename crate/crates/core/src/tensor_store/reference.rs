use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{check_finite, NpyArray, NpyData};
use crate::error::{Error, Result};

/// Provenance written next to a reference feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceManifest {
    pub n: usize,
    pub c: usize,
    pub metric: String,
    pub sampling_method: String,
    pub seed: u64,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_per_image: Option<usize>,
}

impl ReferenceManifest {
    /// Canonical JSON encoding; the stats binding hash is taken over these bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json_bytes()))
    }
}

/// The `N × C` in-distribution feature library queried by the kNN scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    features: Vec<f32>,
    channels: usize,
    class_labels: Option<Vec<i32>>,
    manifest: ReferenceManifest,
}

impl ReferenceSet {
    /// Builds a reference set; `manifest.n` and `manifest.c` are overwritten
    /// with the actual matrix dimensions.
    pub fn new(
        features: Vec<f32>,
        channels: usize,
        class_labels: Option<Vec<i32>>,
        mut manifest: ReferenceManifest,
    ) -> Result<Self> {
        if channels == 0 || features.is_empty() || !features.len().is_multiple_of(channels) {
            return Err(Error::Shape(format!(
                "{} values do not form a non-empty matrix with {channels} columns",
                features.len()
            )));
        }
        check_finite(&features)?;
        let count = features.len() / channels;
        if let Some(labels) = &class_labels {
            if labels.len() != count {
                return Err(Error::Shape(format!(
                    "{} class labels for {count} reference rows",
                    labels.len()
                )));
            }
        }
        manifest.n = count;
        manifest.c = channels;
        Ok(ReferenceSet {
            features,
            channels,
            class_labels,
            manifest,
        })
    }

    /// Convenience constructor for ad-hoc matrices (tests, examples).
    pub fn from_rows(features: Vec<f32>, channels: usize) -> Result<Self> {
        Self::new(
            features,
            channels,
            None,
            ReferenceManifest {
                n: 0,
                c: channels,
                metric: "l2".into(),
                sampling_method: "none".into(),
                seed: 0,
                source: "in-memory".into(),
                model_id: None,
                layer: None,
                budget: None,
                pool_size: None,
                projection_dim: None,
                max_per_image: None,
            },
        )
    }

    pub fn count(&self) -> usize {
        self.features.len() / self.channels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    pub fn class_labels(&self) -> Option<&[i32]> {
        self.class_labels.as_deref()
    }

    pub fn manifest(&self) -> &ReferenceManifest {
        &self.manifest
    }

    pub fn manifest_mut(&mut self) -> &mut ReferenceManifest {
        &mut self.manifest
    }

    /// Paths of the files making up the reference set stored under `prefix`.
    pub fn paths(prefix: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let with = |suffix: &str| {
            let mut s = prefix.as_os_str().to_owned();
            s.push(suffix);
            PathBuf::from(s)
        };
        (
            with(".features.npy"),
            with(".labels.npy"),
            with(".manifest.json"),
        )
    }

    /// Writes `<prefix>.features.npy`, `<prefix>.labels.npy` (when labels are
    /// present) and `<prefix>.manifest.json`.
    pub fn save(&self, prefix: &Path) -> Result<()> {
        let (features_path, labels_path, manifest_path) = Self::paths(prefix);
        if let Some(parent) = features_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        NpyArray::f32(vec![self.count(), self.channels], self.features.clone())?
            .write(&features_path)?;
        match &self.class_labels {
            Some(labels) => {
                NpyArray::i32(vec![labels.len()], labels.clone())?.write(&labels_path)?
            }
            None if labels_path.exists() => {
                fs::remove_file(&labels_path).map_err(|e| Error::io(&labels_path, e))?
            }
            None => {}
        }
        fs::write(&manifest_path, self.manifest.to_json_bytes())
            .map_err(|e| Error::io(&manifest_path, e))
    }

    pub fn load(prefix: &Path) -> Result<Self> {
        let (features_path, labels_path, manifest_path) = Self::paths(prefix);
        let text = fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: ReferenceManifest = serde_json::from_slice(&text)?;

        let array = NpyArray::read(&features_path)?;
        let (rows, channels) = match array.shape.as_slice() {
            [n, c] => (*n, *c),
            other => {
                return Err(Error::Shape(format!(
                    "{}: reference features must be a matrix, found {other:?}",
                    features_path.display()
                )))
            }
        };
        let features = match array.data {
            NpyData::F32(v) => v,
            NpyData::I32(_) => {
                return Err(Error::Dtype {
                    found: "<i4".into(),
                    expected: "'<f4'",
                })
            }
        };
        if manifest.n != rows || manifest.c != channels {
            return Err(Error::Validation(format!(
                "manifest declares {}x{} but features are {rows}x{channels}",
                manifest.n, manifest.c
            )));
        }
        let class_labels = if labels_path.exists() {
            match NpyArray::read(&labels_path)?.data {
                NpyData::I32(v) => Some(v),
                NpyData::F32(_) => {
                    return Err(Error::Dtype {
                        found: "<f4".into(),
                        expected: "'<i4'",
                    })
                }
            }
        } else {
            None
        };
        Self::new(features, channels, class_labels, manifest)
            .map_err(|e| Error::Validation(format!("{}: {e}", features_path.display())))
    }
}
