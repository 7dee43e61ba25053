//! Datasets, the synthetic multi-domain generator, IDX ingestion, image
//! transforms for building pseudo-domains and the quota batch sampler.
//!
//! True latent domains never live on a [`Dataset`]: generators return them
//! separately as [`LatentTruth`], so the sampler and trainer cannot read them.

pub mod idx;
pub mod manifest;
pub mod sampler;
pub mod synth;
pub mod transform;

use serde::{Deserialize, Serialize};

use crate::assignment::DomainTag;
use crate::error::{MdaError, Result};
use crate::tensor::Tensor;

pub use idx::{idx_load, idx_write};
pub use manifest::{DataConfig, DataManifest, ManifestEntry};
pub use sampler::{Batch, BatchSampler, BatchSpec};
pub use synth::{synth_make, DomainTransform, SynthConfig};
pub use transform::{domain_transform, ImageTransform};

/// Column-wise sample collection: features `[n, ...]`, optional class labels
/// and a domain tag per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<Option<usize>>,
    tags: Vec<DomainTag>,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<Option<usize>>, tags: Vec<DomainTag>) -> Result<Self> {
        if features.rank() < 2 {
            return Err(MdaError::InvalidArgument("dataset features need a batch dimension".into()));
        }
        let n = features.batch();
        if labels.len() != n || tags.len() != n {
            return Err(MdaError::shape(
                "Dataset::new",
                n,
                format!("{} labels / {} tags", labels.len(), tags.len()),
            ));
        }
        Ok(Dataset { features, labels, tags })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn tags(&self) -> &[DomainTag] {
        &self.tags
    }

    /// Shape of one sample (features without the batch dimension).
    pub fn sample_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    /// Labels as plain indices; errors if any is hidden.
    pub fn dense_labels(&self) -> Result<Vec<usize>> {
        self.labels
            .iter()
            .map(|l| l.ok_or_else(|| MdaError::InvalidArgument("dataset has hidden labels".into())))
            .collect()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            tags: idx.iter().map(|&i| self.tags[i]).collect(),
        }
    }

    pub fn with_tags(mut self, tags: Vec<DomainTag>) -> Result<Self> {
        if tags.len() != self.len() {
            return Err(MdaError::shape("Dataset::with_tags", self.len(), tags.len()));
        }
        self.tags = tags;
        Ok(self)
    }

    /// Copy with every class label removed, as required for target training data.
    pub fn without_labels(&self) -> Dataset {
        Dataset {
            labels: vec![None; self.len()],
            ..self.clone()
        }
    }

    pub fn concat(parts: &[Dataset]) -> Result<Dataset> {
        let first = parts
            .first()
            .ok_or_else(|| MdaError::InvalidArgument("cannot concatenate zero datasets".into()))?;
        let mut shape = first.features.shape().to_vec();
        shape[0] = parts.iter().map(Dataset::len).sum();
        let mut data = Vec::with_capacity(shape.iter().product());
        let mut labels = Vec::new();
        let mut tags = Vec::new();
        for p in parts {
            if p.sample_shape() != first.sample_shape() {
                return Err(MdaError::shape(
                    "Dataset::concat",
                    format!("{:?}", first.sample_shape()),
                    format!("{:?}", p.sample_shape()),
                ));
            }
            data.extend_from_slice(p.features.data());
            labels.extend_from_slice(&p.labels);
            tags.extend_from_slice(&p.tags);
        }
        Dataset::new(Tensor::new(shape, data)?, labels, tags)
    }
}

/// Ground-truth latent domain of each source sample. Evaluation only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentTruth {
    domains: Vec<usize>,
}

impl LatentTruth {
    pub fn new(domains: Vec<usize>) -> Self {
        LatentTruth { domains }
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn count(&self) -> usize {
        self.domains.iter().max().map_or(0, |m| m + 1)
    }
}

/// Everything one experiment trains and evaluates on.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSplits {
    /// Labeled source samples, all tagged [`DomainTag::UnknownSource`] unless revealed.
    pub source: Dataset,
    /// Unlabeled target samples used for training.
    pub target_train: Dataset,
    /// Labeled held-out target samples used only for accuracy.
    pub target_test: Dataset,
    pub truth: LatentTruth,
}

impl DataSplits {
    /// Copy of the splits where the source domains listed in `reveal` are
    /// tagged with their true latent domain.
    pub fn reveal(&self, reveal: &[usize]) -> Result<DataSplits> {
        let mut tags = self.source.tags().to_vec();
        for &i in reveal {
            let d = *self
                .truth
                .domains()
                .get(i)
                .ok_or_else(|| MdaError::InvalidArgument(format!("source index {i} out of range")))?;
            tags[i] = DomainTag::KnownSource(d);
        }
        Ok(DataSplits {
            source: self.source.clone().with_tags(tags)?,
            ..self.clone()
        })
    }
}
