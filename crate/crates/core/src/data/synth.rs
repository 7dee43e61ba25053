//! Seeded multi-domain generator. Classes are Gaussian blobs around shared
//! prototypes; each domain pushes its samples through its own transform.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DataSplits, Dataset, LatentTruth};
use crate::assignment::DomainTag;
use crate::error::{MdaError, Result};
use crate::tensor::{derive_seed, seeded_rng, Tensor};

/// Per-domain feature transform `x -> scale * P R x + translation * u + noise`,
/// where `R` rotates each coordinate pair `(2j, 2j+1)`, `P` is an optional
/// seeded permutation and `u` the normalized all-ones direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainTransform {
    pub rotation_deg: f64,
    pub translation: f64,
    pub scale: f64,
    pub noise_std: f64,
    pub permute: bool,
}

impl Default for DomainTransform {
    fn default() -> Self {
        DomainTransform {
            rotation_deg: 0.0,
            translation: 0.0,
            scale: 1.0,
            noise_std: 0.0,
            permute: false,
        }
    }
}

impl DomainTransform {
    fn validate(&self) -> Result<()> {
        let finite = [self.rotation_deg, self.translation, self.scale, self.noise_std]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.scale == 0.0 || self.noise_std < 0.0 {
            return Err(MdaError::InvalidArgument(format!("invalid domain transform {self:?}")));
        }
        Ok(())
    }

    /// Applies the deterministic part (no noise) in place.
    fn apply(&self, x: &mut [f64], perm: Option<&[usize]>) {
        let (s, c) = self.rotation_deg.to_radians().sin_cos();
        for pair in x.chunks_exact_mut(2) {
            let (a, b) = (pair[0], pair[1]);
            pair[0] = c * a - s * b;
            pair[1] = s * a + c * b;
        }
        if let Some(p) = perm {
            let src = x.to_vec();
            for (dst, &from) in x.iter_mut().zip(p) {
                *dst = src[from];
            }
        }
        let shift = self.translation / (x.len() as f64).sqrt();
        for v in x.iter_mut() {
            *v = self.scale * *v + shift;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub classes: usize,
    pub feature_dim: usize,
    /// One transform per latent source domain.
    pub source_domains: Vec<DomainTransform>,
    pub target: DomainTransform,
    /// Training samples drawn from each latent source domain.
    pub samples_per_domain: usize,
    pub target_train: usize,
    pub target_test: usize,
    /// Standard deviation of the class prototypes around the origin.
    pub class_separation: f64,
    pub within_class_std: f64,
    /// When set, features are emitted as `[n, c, h, w]` patches with
    /// `c * h * w == feature_dim`.
    pub patch: Option<[usize; 3]>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            classes: 4,
            feature_dim: 8,
            source_domains: vec![
                DomainTransform {
                    translation: 6.0,
                    ..DomainTransform::default()
                },
                DomainTransform {
                    translation: -6.0,
                    ..DomainTransform::default()
                },
            ],
            target: DomainTransform {
                scale: 1.5,
                ..DomainTransform::default()
            },
            samples_per_domain: 400,
            target_train: 400,
            target_test: 400,
            class_separation: 1.5,
            within_class_std: 1.0,
            patch: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MdaError::InvalidArgument(m.to_string()));
        if self.classes < 2 {
            return bad("synthetic data needs at least 2 classes");
        }
        if self.source_domains.is_empty() {
            return bad("synthetic data needs at least 1 source domain");
        }
        if self.feature_dim == 0 || self.samples_per_domain == 0 || self.target_train == 0 || self.target_test == 0 {
            return bad("feature_dim and split sizes must be positive");
        }
        if !(self.class_separation.is_finite() && self.within_class_std.is_finite() && self.within_class_std >= 0.0) {
            return bad("class_separation and within_class_std must be finite, std >= 0");
        }
        if let Some(p) = self.patch {
            if p.contains(&0) || p.iter().product::<usize>() != self.feature_dim {
                return bad("patch dims must be positive and multiply to feature_dim");
            }
        }
        self.source_domains
            .iter()
            .chain([&self.target])
            .try_for_each(DomainTransform::validate)
    }

    fn sample_shape(&self) -> Vec<usize> {
        match self.patch {
            Some(p) => p.to_vec(),
            None => vec![self.feature_dim],
        }
    }
}

/// Draws `n` samples from one domain. Classes cycle so every class is
/// represented evenly; the order is then shuffled.
/// The permutation depends on `domain_stream` only, so splits of the same
/// domain share it.
fn draw_domain(
    cfg: &SynthConfig,
    prototypes: &[Vec<f64>],
    t: &DomainTransform,
    n: usize,
    domain_stream: u64,
    split_stream: u64,
) -> (Vec<f64>, Vec<usize>) {
    let perm = t.permute.then(|| {
        let mut p: Vec<usize> = (0..cfg.feature_dim).collect();
        p.shuffle(&mut seeded_rng(derive_seed(cfg.seed, domain_stream)));
        p
    });
    let mut rng = seeded_rng(derive_seed(cfg.seed, split_stream));
    let within = Normal::new(0.0, cfg.within_class_std).expect("validated std");
    let noise = Normal::new(0.0, t.noise_std).expect("validated std");
    let mut labels: Vec<usize> = (0..n).map(|i| i % cfg.classes).collect();
    labels.shuffle(&mut rng);
    let mut data = Vec::with_capacity(n * cfg.feature_dim);
    for &y in &labels {
        let mut x: Vec<f64> = prototypes[y].iter().map(|m| m + within.sample(&mut rng)).collect();
        t.apply(&mut x, perm.as_deref());
        data.extend(x.into_iter().map(|v| v + noise.sample(&mut rng)));
    }
    (data, labels)
}

/// Generates source, target-train and target-test splits plus the latent
/// truth of every source sample. A pure function of `cfg`.
pub fn synth_make(cfg: &SynthConfig) -> Result<DataSplits> {
    cfg.validate()?;
    let mut rng = seeded_rng(derive_seed(cfg.seed, 1));
    let proto = Normal::new(0.0, cfg.class_separation.abs()).expect("validated separation");
    let prototypes: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| (0..cfg.feature_dim).map(|_| proto.sample(&mut rng)).collect())
        .collect();

    let shape_of = |n: usize| {
        let mut s = vec![n];
        s.extend(cfg.sample_shape());
        s
    };

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut truth = Vec::new();
    for (d, t) in cfg.source_domains.iter().enumerate() {
        let (x, y) = draw_domain(cfg, &prototypes, t, cfg.samples_per_domain, 100 + d as u64, 1000 + d as u64);
        data.extend(x);
        truth.extend(std::iter::repeat_n(d, y.len()));
        labels.extend(y);
    }
    // Interleave domains so that no code can recover them from position.
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.shuffle(&mut rng);
    let n = labels.len();
    let all = Dataset::new(
        Tensor::new(shape_of(n), data)?,
        labels.into_iter().map(Some).collect(),
        vec![DomainTag::UnknownSource; n],
    )?;
    let source = all.select(&order);
    let truth = LatentTruth::new(order.iter().map(|&i| truth[i]).collect());

    let target_split = |n: usize, stream: u64| -> Result<Dataset> {
        let (x, y) = draw_domain(cfg, &prototypes, &cfg.target, n, 99, stream);
        Dataset::new(
            Tensor::new(shape_of(n), x)?,
            y.into_iter().map(Some).collect(),
            vec![DomainTag::Target; n],
        )
    };
    let target_train = target_split(cfg.target_train, 200)?.without_labels();
    let target_test = target_split(cfg.target_test, 201)?;
    Ok(DataSplits {
        source,
        target_train,
        target_test,
        truth,
    })
}
