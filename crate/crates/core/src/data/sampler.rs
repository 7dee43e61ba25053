//! Quota batch sampler. Source rows are drawn uniformly from the pooled
//! source set, target rows from the target set; both use per-epoch
//! shuffling unless sampling with replacement.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::assignment::DomainTag;
use crate::error::{MdaError, Result};
use crate::tensor::{derive_seed, seeded_rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatchSpec {
    pub source_quota: usize,
    pub target_quota: usize,
    pub seed: u64,
    pub replacement: bool,
}

impl Default for BatchSpec {
    fn default() -> Self {
        BatchSpec {
            source_quota: 64,
            target_quota: 64,
            seed: 0,
            replacement: false,
        }
    }
}

/// One training batch: source rows first, then target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    /// Class labels; always `None` on target rows.
    pub labels: Vec<Option<usize>>,
    pub tags: Vec<DomainTag>,
    /// Dataset indices of the source rows and target rows.
    pub source_indices: Vec<usize>,
    pub target_indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

#[derive(Debug, Clone)]
struct IndexStream {
    n: usize,
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl IndexStream {
    fn new(n: usize, seed: u64) -> Self {
        IndexStream {
            n,
            order: (0..n).collect(),
            pos: n,
            rng: seeded_rng(seed),
        }
    }

    fn draw(&mut self, quota: usize, replacement: bool) -> Vec<usize> {
        if replacement {
            return (0..quota).map(|_| self.rng.random_range(0..self.n)).collect();
        }
        let mut out = Vec::with_capacity(quota);
        while out.len() < quota {
            if self.pos == self.n {
                self.order.shuffle(&mut self.rng);
                self.pos = 0;
            }
            let take = (quota - out.len()).min(self.n - self.pos);
            out.extend_from_slice(&self.order[self.pos..self.pos + take]);
            self.pos += take;
        }
        out
    }
}

/// Stateful sampler; owned by the training loop.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    spec: BatchSpec,
    source: IndexStream,
    target: IndexStream,
}

impl BatchSampler {
    pub fn new(spec: BatchSpec, source: &Dataset, target: &Dataset) -> Result<Self> {
        if spec.source_quota == 0 {
            return Err(MdaError::InvalidArgument("source_quota must be >= 1".into()));
        }
        for (quota, available, name) in [
            (spec.source_quota, source.len(), "source"),
            (spec.target_quota, target.len(), "target"),
        ] {
            if quota > 0 && available == 0 {
                return Err(MdaError::EmptyBatch(name));
            }
            if !spec.replacement && quota > available {
                return Err(MdaError::QuotaExceedsDataset { quota, available });
            }
        }
        if target.tags().iter().any(|t| *t != DomainTag::Target) || source.tags().iter().any(|t| !t.is_source()) {
            return Err(MdaError::InvalidArgument("source/target datasets carry mismatched tags".into()));
        }
        Ok(BatchSampler {
            spec,
            source: IndexStream::new(source.len(), derive_seed(spec.seed, 1)),
            target: IndexStream::new(target.len(), derive_seed(spec.seed, 2)),
        })
    }

    pub fn spec(&self) -> &BatchSpec {
        &self.spec
    }

    /// Draws the next batch. `source` and `target` must be the datasets the
    /// sampler was built for.
    pub fn sample(&mut self, source: &Dataset, target: &Dataset) -> Result<Batch> {
        if source.len() != self.source.n || target.len() != self.target.n {
            return Err(MdaError::shape(
                "BatchSampler::sample",
                format!("{} / {}", self.source.n, self.target.n),
                format!("{} / {}", source.len(), target.len()),
            ));
        }
        let source_indices = self.source.draw(self.spec.source_quota, self.spec.replacement);
        let target_indices = self.target.draw(self.spec.target_quota, self.spec.replacement);

        let src = source.features().select_rows(&source_indices);
        let features = if target_indices.is_empty() {
            src
        } else {
            let tgt = target.features().select_rows(&target_indices);
            let mut shape = src.shape().to_vec();
            shape[0] += tgt.batch();
            let mut data = src.into_data();
            data.extend_from_slice(tgt.data());
            Tensor::new(shape, data)?
        };
        let mut labels: Vec<Option<usize>> = source_indices.iter().map(|&i| source.labels()[i]).collect();
        labels.extend(std::iter::repeat_n(None, target_indices.len()));
        let mut tags: Vec<DomainTag> = source_indices.iter().map(|&i| source.tags()[i]).collect();
        tags.extend(std::iter::repeat_n(DomainTag::Target, target_indices.len()));
        Ok(Batch {
            features,
            labels,
            tags,
            source_indices,
            target_indices,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sets(ns: usize, nt: usize) -> (Dataset, Dataset) {
        let s = Dataset::new(
            Tensor::new(vec![ns, 1], (0..ns).map(|i| i as f64).collect()).unwrap(),
            (0..ns).map(|i| Some(i % 2)).collect(),
            vec![DomainTag::UnknownSource; ns],
        )
        .unwrap();
        let t = Dataset::new(
            Tensor::new(vec![nt, 1], (0..nt).map(|i| -(i as f64)).collect()).unwrap(),
            vec![None; nt],
            vec![DomainTag::Target; nt],
        )
        .unwrap();
        (s, t)
    }

    #[test]
    fn epoch_covers_every_sample_once() {
        let (s, t) = sets(10, 6);
        let spec = BatchSpec {
            source_quota: 5,
            target_quota: 3,
            ..BatchSpec::default()
        };
        let mut sampler = BatchSampler::new(spec, &s, &t).unwrap();
        let mut seen: Vec<usize> = (0..2).flat_map(|_| sampler.sample(&s, &t).unwrap().source_indices).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn replacement_allows_large_quotas() {
        let (s, t) = sets(3, 2);
        let spec = BatchSpec {
            source_quota: 8,
            target_quota: 8,
            replacement: true,
            ..BatchSpec::default()
        };
        let b = BatchSampler::new(spec, &s, &t).unwrap().sample(&s, &t).unwrap();
        assert_eq!(b.len(), 16);
        assert!(b.source_indices.iter().all(|&i| i < 3));
    }
}
