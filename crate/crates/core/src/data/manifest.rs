//! Data section of an experiment config: either the synthetic generator or a
//! manifest of IDX file pairs, each optionally transformed into a pseudo-domain.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::idx::idx_load;
use super::synth::{synth_make, SynthConfig};
use super::transform::{domain_transform, ImageTransform};
use super::{DataSplits, Dataset, LatentTruth};
use crate::assignment::DomainTag;
use crate::error::Result;

/// Environment variable that anchors relative IDX paths.
pub const DATA_DIR_ENV: &str = "MDA_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataConfig {
    Synthetic(SynthConfig),
    Idx(DataManifest),
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic(SynthConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub images: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub transforms: Vec<ImageTransform>,
    /// Keep only the first `limit` samples.
    #[serde(default)]
    pub limit: Option<usize>,
    /// Reveal this entry's domain to training (source entries only).
    #[serde(default)]
    pub known_domain: bool,
}

/// Each source entry is one latent domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataManifest {
    pub sources: Vec<ManifestEntry>,
    pub target: ManifestEntry,
    pub target_test: ManifestEntry,
}

fn resolve(path: &Path, base: Option<&Path>) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_DIR_ENV) {
        Some(dir) => Path::new(&dir).join(path),
        None => base.map_or_else(|| path.to_path_buf(), |b| b.join(path)),
    }
}

fn load_entry(entry: &ManifestEntry, base: Option<&Path>, tag: DomainTag) -> Result<Dataset> {
    let (mut images, labels) = idx_load(&resolve(&entry.images, base), &resolve(&entry.labels, base))?;
    for t in &entry.transforms {
        images = domain_transform(&images, t)?;
    }
    let total = labels.len();
    let all = Dataset::new(images, labels.into_iter().map(Some).collect(), vec![tag; total])?;
    Ok(match entry.limit {
        Some(l) if l < total => all.select(&(0..l).collect::<Vec<_>>()),
        _ => all,
    })
}

impl DataManifest {
    /// Loads every entry. Relative paths resolve against `MDA_DATA_DIR`, or
    /// against `base` when the variable is unset.
    pub fn load(&self, base: Option<&Path>) -> Result<DataSplits> {
        let mut parts = Vec::with_capacity(self.sources.len());
        let mut truth = Vec::new();
        for (d, entry) in self.sources.iter().enumerate() {
            let tag = if entry.known_domain {
                DomainTag::KnownSource(d)
            } else {
                DomainTag::UnknownSource
            };
            let part = load_entry(entry, base, tag)?;
            truth.extend(std::iter::repeat_n(d, part.len()));
            parts.push(part);
        }
        Ok(DataSplits {
            source: Dataset::concat(&parts)?,
            target_train: load_entry(&self.target, base, DomainTag::Target)?.without_labels(),
            target_test: load_entry(&self.target_test, base, DomainTag::Target)?,
            truth: LatentTruth::new(truth),
        })
    }
}

impl DataConfig {
    pub fn load(&self, base: Option<&Path>) -> Result<DataSplits> {
        match self {
            DataConfig::Synthetic(cfg) => synth_make(cfg),
            DataConfig::Idx(m) => m.load(base),
        }
    }
}
