//! Experiment runners: k ablation, domain-label sweep and the baseline grid.
//! Each (configuration, seed) run is independent, so runs fan out over the
//! rayon pool and the tables are joined afterwards in input order.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, Evaluator, TrainOutcome};
use crate::config::ExperimentConfig;
use crate::data::DataSplits;
use crate::error::{MdaError, Result};
use crate::network::{Network, Normalization};
use crate::tensor::{derive_seed, seeded_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    /// Plain whole-batch normalization, no target or domain terms.
    SourceOnly,
    /// One source component plus the target component.
    Unified,
    /// `k` latent source domains discovered by the branch.
    Discovery { k: usize },
    /// Every source sample tagged with its true domain.
    KnownDomains,
    /// A seeded `fraction` of source samples tagged with their true domain.
    Revealed { fraction: f64 },
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::SourceOnly => "source_only".into(),
            Variant::Unified => "unified".into(),
            Variant::Discovery { k } => format!("discovery_k{k}"),
            Variant::KnownDomains => "known_domains".into(),
            Variant::Revealed { fraction } => format!("labels_{fraction}"),
        }
    }
}

/// Seeded subset of `round(fraction * n)` source indices.
pub fn reveal_subset(n: usize, fraction: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(MdaError::InvalidArgument(format!("label fraction {fraction} outside [0, 1]")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seeded_rng(derive_seed(seed, 0x5eed)));
    idx.truncate((fraction * n as f64).round() as usize);
    idx.sort_unstable();
    Ok(idx)
}

/// Resolves a variant into concrete configs and (possibly re-tagged) data.
pub fn prepare(base: &ExperimentConfig, splits: &DataSplits, variant: Variant, seed: u64) -> Result<(ExperimentConfig, DataSplits)> {
    let mut cfg = base.clone().with_seed(seed);
    cfg.model.input_dim = splits.source.sample_shape().iter().product();
    let true_k = splits.truth.count();
    let data = match variant {
        Variant::SourceOnly => {
            cfg.model.normalization = Normalization::Pooled;
            cfg.model.k = 1;
            cfg.train.loss.lambda_t = 0.0;
            cfg.train.loss.lambda_c = 0.0;
            cfg.train.loss.lambda_d = 0.0;
            splits.clone()
        }
        Variant::Unified => {
            cfg.model.k = 1;
            splits.clone()
        }
        Variant::Discovery { k } => {
            cfg.model.k = k;
            splits.clone()
        }
        Variant::KnownDomains => {
            cfg.model.k = true_k;
            splits.reveal(&(0..splits.source.len()).collect::<Vec<_>>())?
        }
        Variant::Revealed { fraction } => {
            cfg.model.k = true_k;
            splits.reveal(&reveal_subset(splits.source.len(), fraction, seed)?)?
        }
    };
    Ok((cfg, data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub label: String,
    pub seed: u64,
    pub accuracy: f64,
    pub nmi: f64,
    pub purity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub label: String,
    pub runs: usize,
    pub mean_accuracy: f64,
    pub median_accuracy: f64,
    pub mean_nmi: f64,
    pub median_nmi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub runs: Vec<RunResult>,
    pub groups: Vec<GroupSummary>,
}

impl ExperimentTable {
    pub fn group(&self, label: &str) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.label == label)
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Trains one model for `variant` and `seed`.
pub fn run_variant(base: &ExperimentConfig, splits: &DataSplits, variant: Variant, seed: u64) -> Result<(Network, TrainOutcome)> {
    let (cfg, data) = prepare(base, splits, variant, seed)?;
    let mut net = Network::new(cfg.model.clone())?;
    let eval = Evaluator::new(data.target_test.clone(), data.source.clone(), data.truth.clone())?;
    let outcome = train(&mut net, &data.source, &data.target_train, &cfg.train, &eval)?;
    Ok((net, outcome))
}

/// Runs every variant for every seed and summarizes per variant.
pub fn run_grid(base: &ExperimentConfig, variants: &[Variant], seeds: &[u64]) -> Result<ExperimentTable> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(MdaError::InvalidArgument("experiment grid needs variants and seeds".into()));
    }
    let splits = base.data.load(base.data_base.as_deref())?;
    let jobs: Vec<(Variant, u64)> = variants.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(v, seed)| {
            let (_, out) = run_variant(base, &splits, v, seed)?;
            Ok(RunResult {
                label: v.label(),
                seed,
                accuracy: out.scores.accuracy,
                nmi: out.scores.nmi,
                purity: out.scores.purity,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let groups = variants
        .iter()
        .map(|v| {
            let label = v.label();
            let acc: Vec<f64> = runs.iter().filter(|r| r.label == label).map(|r| r.accuracy).collect();
            let nmi: Vec<f64> = runs.iter().filter(|r| r.label == label).map(|r| r.nmi).collect();
            GroupSummary {
                runs: acc.len(),
                mean_accuracy: mean(&acc),
                median_accuracy: median(&acc),
                mean_nmi: mean(&nmi),
                median_nmi: median(&nmi),
                label,
            }
        })
        .collect();
    Ok(ExperimentTable { runs, groups })
}

pub fn run_k_ablation(base: &ExperimentConfig, k_values: &[usize], seeds: &[u64]) -> Result<ExperimentTable> {
    let variants: Vec<Variant> = k_values.iter().map(|&k| Variant::Discovery { k }).collect();
    run_grid(base, &variants, seeds)
}

pub fn run_supervision_sweep(base: &ExperimentConfig, fractions: &[f64], seeds: &[u64]) -> Result<ExperimentTable> {
    let variants: Vec<Variant> = fractions.iter().map(|&fraction| Variant::Revealed { fraction }).collect();
    run_grid(base, &variants, seeds)
}

/// Source-only, unified, discovery (with the configured k) and known-domain
/// runs on the same data and seeds.
pub fn run_baseline_grid(base: &ExperimentConfig, seeds: &[u64]) -> Result<ExperimentTable> {
    let variants = [
        Variant::SourceOnly,
        Variant::Unified,
        Variant::Discovery { k: base.model.k },
        Variant::KnownDomains,
    ];
    run_grid(base, &variants, seeds)
}
