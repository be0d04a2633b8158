//! Dataset manifests.
//!
//! A manifest is a TOML document listing clouds with their labels:
//!
//! ```toml
//! class_count = 4
//!
//! [[entries]]
//! cloud_path = "clouds/0000.xyz"
//! label_index = 2
//! saliency_path = "clouds/0000.sal"   # optional
//!
//! [[entries]]
//! cloud_path = "mixed/0000.xyz"
//! soft_label = [0.25, 0.0, 0.75, 0.0]
//!
//! [[entries]]
//! cloud_path = "parts/0000.xyz"
//! point_labels_path = "parts/0000.seg"
//! ```
//!
//! Each entry carries exactly one of `label_index`, `soft_label` or
//! `point_labels_path`. Per-point labels share the `class_count` label space
//! and the object label is then their class histogram. Relative paths resolve
//! against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pointcloud::{read_point_labels, read_saliency, read_xyz, LabeledCloud, SoftLabel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub class_count: usize,
    #[serde(default)]
    pub entries: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub cloud_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soft_label: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_labels_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_path: Option<String>,
}

impl Manifest {
    pub fn new(class_count: usize) -> Self {
        Self {
            class_count,
            entries: Vec::new(),
        }
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let manifest: Manifest = toml::from_str(text).map_err(|e| Error::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        manifest.validate(path)?;
        Ok(manifest)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest is always representable as TOML")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    fn validate(&self, path: &Path) -> Result<()> {
        let bad = |i: usize, message: String| Error::Manifest {
            path: path.to_path_buf(),
            message: format!("entry {i}: {message}"),
        };
        if self.class_count == 0 {
            return Err(Error::Manifest {
                path: path.to_path_buf(),
                message: "class_count must be positive".into(),
            });
        }
        for (i, e) in self.entries.iter().enumerate() {
            let kinds = [
                e.label_index.is_some(),
                e.soft_label.is_some(),
                e.point_labels_path.is_some(),
            ];
            if kinds.iter().filter(|&&k| k).count() != 1 {
                return Err(bad(
                    i,
                    "needs exactly one of label_index, soft_label, point_labels_path".into(),
                ));
            }
            if let Some(l) = e.label_index {
                if l >= self.class_count {
                    return Err(bad(i, format!("label_index {l} >= class_count {}", self.class_count)));
                }
            }
            if let Some(probs) = &e.soft_label {
                if probs.len() != self.class_count {
                    return Err(bad(
                        i,
                        format!("soft_label has {} entries, expected {}", probs.len(), self.class_count),
                    ));
                }
                SoftLabel::new(probs.clone()).map_err(|err| bad(i, err.to_string()))?;
            }
        }
        Ok(())
    }

    /// Label of entry `i` without touching the filesystem (histograms of
    /// per-point labels need the file and are not handled here).
    pub fn entry_label(&self, i: usize) -> Option<SoftLabel> {
        let e = &self.entries[i];
        if let Some(l) = e.label_index {
            return SoftLabel::one_hot(l, self.class_count).ok();
        }
        e.soft_label.clone().and_then(|p| SoftLabel::new(p).ok())
    }
}

pub fn resolve(base: &Path, rel: &str) -> PathBuf {
    let p = Path::new(rel);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn base_dir(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Loads entry `i` of a manifest stored at `manifest_path`.
pub fn load_entry(manifest: &Manifest, manifest_path: &Path, i: usize) -> Result<LabeledCloud> {
    let base = base_dir(manifest_path);
    let e = &manifest.entries[i];
    let cloud = read_xyz(resolve(&base, &e.cloud_path))?;
    let mut sample = match &e.point_labels_path {
        Some(rel) => {
            let labels = read_point_labels(resolve(&base, rel), manifest.class_count)?;
            let mut hist = vec![0.0; manifest.class_count];
            for &l in labels.labels() {
                hist[l] += 1.0;
            }
            let total = labels.len().max(1) as f64;
            let label = SoftLabel::new(hist.into_iter().map(|h| h / total).collect())?;
            LabeledCloud::new(cloud, label).with_point_labels(labels)?
        }
        None => {
            let label = manifest.entry_label(i).expect("validated at load");
            LabeledCloud::new(cloud, label)
        }
    };
    if let Some(rel) = &e.saliency_path {
        sample = sample.with_saliency(read_saliency(resolve(&base, rel))?)?;
    }
    Ok(sample)
}

/// Loads every entry of the manifest at `path`.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<(Manifest, Vec<LabeledCloud>)> {
    let path = path.as_ref();
    let manifest = Manifest::load(path)?;
    let data = (0..manifest.entries.len())
        .map(|i| load_entry(&manifest, path, i))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, data))
}
