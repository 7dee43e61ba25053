//! Accuracy, domain-discovery scores and the per-run metrics table.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{MdaError, Result};
use crate::tensor::Tensor;

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

pub fn argmax_rows(probs: &Tensor) -> Vec<usize> {
    probs.rows().map(argmax).collect()
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(MdaError::EmptyBatch("evaluation"));
    }
    if probs.batch() != labels.len() {
        return Err(MdaError::shape("accuracy", probs.batch(), labels.len()));
    }
    let hits = probs.rows().zip(labels).filter(|(r, &y)| argmax(r) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `(nmi, purity)` of a predicted partition against the true one, with
/// `nmi = I(P;T) / sqrt(H(P) H(T))`.
pub fn domain_discovery_metrics(predicted: &[usize], truth: &[usize]) -> Result<(f64, f64)> {
    if predicted.is_empty() {
        return Err(MdaError::EmptyBatch("evaluation"));
    }
    if predicted.len() != truth.len() {
        return Err(MdaError::shape("domain_discovery_metrics", predicted.len(), truth.len()));
    }
    let n = predicted.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pc: BTreeMap<usize, usize> = BTreeMap::new();
    let mut tc: BTreeMap<usize, usize> = BTreeMap::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *joint.entry((p, t)).or_default() += 1;
        *pc.entry(p).or_default() += 1;
        *tc.entry(t).or_default() += 1;
    }

    let mut best_per_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    for (&(p, _), &c) in &joint {
        let e = best_per_cluster.entry(p).or_default();
        *e = (*e).max(c);
    }
    let purity = best_per_cluster.values().sum::<usize>() as f64 / n;

    let hp = entropy(pc.values().copied(), n);
    let ht = entropy(tc.values().copied(), n);
    let nmi = if hp == 0.0 || ht == 0.0 {
        // Both single-cluster partitions are identical; otherwise no information.
        if hp == ht {
            1.0
        } else {
            0.0
        }
    } else {
        let mi: f64 = joint
            .iter()
            .map(|(&(p, t), &c)| {
                let pj = c as f64 / n;
                pj * (pj * n * n / (pc[&p] as f64 * tc[&t] as f64)).ln()
            })
            .sum();
        (mi / (hp * ht).sqrt()).clamp(0.0, 1.0)
    };
    Ok((nmi, purity))
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub total: f64,
    pub class_ce: f64,
    pub domain_ce: f64,
    #[serde(rename = "h_C")]
    pub h_c: f64,
    #[serde(rename = "h_D")]
    pub h_d: f64,
    pub acc: f64,
    pub nmi: f64,
    pub purity: f64,
    pub lr: f64,
}

pub const METRICS_HEADER: &str = "iteration,total,class_ce,domain_ce,h_C,h_D,acc,nmi,purity,lr";

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(METRICS_HEADER.split(','))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| MdaError::io("<metrics csv>", e))
}
