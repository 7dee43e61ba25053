//! Domain-prediction branch and assignment bookkeeping.
//!
//! The branch predicts a softmax over the `k` latent source domains. Those
//! predictions are merged with whatever is already known (target flag,
//! revealed source-domain labels) into one [`AssignmentMatrix`] with `k + 1`
//! columns, ordered `s_1..s_k, t`, which every mDA layer of the network reads.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{MdaError, Result};
use crate::layers::Dense;
use crate::tensor::{relu_backward, relu_forward, softmax, softmax_backward, Tensor};

/// What is known about a sample's domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    /// Source sample whose latent domain index is revealed.
    KnownSource(usize),
    UnknownSource,
    Target,
}

impl DomainTag {
    pub fn is_source(self) -> bool {
        !matches!(self, DomainTag::Target)
    }
}

/// Per-sample weights over `k` source domains plus the target, with a mask of
/// hard-assigned rows that must not receive gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    probs: Tensor,
    fixed: Vec<bool>,
}

impl AssignmentMatrix {
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn fixed(&self) -> &[bool] {
        &self.fixed
    }

    /// Number of latent source domains `k`.
    pub fn source_domains(&self) -> usize {
        self.probs.shape()[1] - 1
    }

    pub fn target_column(&self) -> usize {
        self.source_domains()
    }

    pub fn rows(&self) -> usize {
        self.probs.batch()
    }

    /// Checks every invariant against the tags the matrix was built from.
    pub fn validate(&self, tags: &[DomainTag]) -> Result<()> {
        let k = self.source_domains();
        if tags.len() != self.rows() || self.fixed.len() != self.rows() {
            return Err(MdaError::shape("AssignmentMatrix::validate", self.rows(), tags.len()));
        }
        for (i, (row, tag)) in self.probs.rows().zip(tags).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(MdaError::InvalidArgument(format!("row {i} is not a probability vector: {row:?}")));
            }
            let ok = match *tag {
                DomainTag::Target => self.fixed[i] && is_onehot(row, k),
                DomainTag::KnownSource(j) => self.fixed[i] && is_onehot(row, j),
                DomainTag::UnknownSource => !self.fixed[i] && row[k] == 0.0,
            };
            if !ok {
                return Err(MdaError::InvalidArgument(format!("row {i} violates the {tag:?} rule: {row:?}")));
            }
        }
        Ok(())
    }
}

fn is_onehot(row: &[f64], hot: usize) -> bool {
    row.iter().enumerate().all(|(j, &v)| if j == hot { v == 1.0 } else { v == 0.0 })
}

/// Builds the assignment matrix: target rows are one-hot on the target
/// column, known-source rows one-hot on their source column (both fixed),
/// unknown-source rows copy the prediction with a zero target entry (free).
/// Prediction rows of target and known-source samples are ignored.
pub fn merge_assignments(pred: &Tensor, tags: &[DomainTag]) -> Result<AssignmentMatrix> {
    if pred.rank() != 2 || pred.batch() != tags.len() {
        return Err(MdaError::shape(
            "merge_assignments",
            format!("pred [{}, k]", tags.len()),
            format!("{:?}", pred.shape()),
        ));
    }
    let k = pred.shape()[1];
    let width = k + 1;
    let mut probs = vec![0.0; tags.len() * width];
    let mut fixed = vec![false; tags.len()];
    for (i, tag) in tags.iter().enumerate() {
        let row = &mut probs[i * width..(i + 1) * width];
        match *tag {
            DomainTag::Target => {
                row[k] = 1.0;
                fixed[i] = true;
            }
            DomainTag::KnownSource(j) => {
                if j >= k {
                    return Err(MdaError::LabelOutOfRange { label: j, classes: k });
                }
                row[j] = 1.0;
                fixed[i] = true;
            }
            DomainTag::UnknownSource => row[..k].copy_from_slice(pred.row(i)),
        }
    }
    Ok(AssignmentMatrix {
        probs: Tensor::from_parts(vec![tags.len(), width], probs),
        fixed,
    })
}

/// Hands the same assignment to every mDA layer. All views point at one
/// allocation, so per-sample rows are identical across layers by construction.
pub fn broadcast_contract(assignment: AssignmentMatrix, layer_count: usize) -> Vec<Arc<AssignmentMatrix>> {
    let shared = Arc::new(assignment);
    (0..layer_count).map(|_| Arc::clone(&shared)).collect()
}

/// Single gradient buffer for the shared assignment; fixed rows stay zero.
#[derive(Debug, Clone)]
pub struct AssignmentGrad {
    grad: Tensor,
    fixed: Vec<bool>,
}

impl AssignmentGrad {
    pub fn new(assignment: &AssignmentMatrix) -> Self {
        AssignmentGrad {
            grad: Tensor::zeros(assignment.probs().shape()),
            fixed: assignment.fixed().to_vec(),
        }
    }

    pub fn accumulate(&mut self, layer_grad: &Tensor) -> Result<()> {
        if layer_grad.shape() != self.grad.shape() {
            return Err(MdaError::shape(
                "AssignmentGrad::accumulate",
                format!("{:?}", self.grad.shape()),
                format!("{:?}", layer_grad.shape()),
            ));
        }
        let width = self.grad.row_len();
        for (i, fixed) in self.fixed.iter().enumerate() {
            if *fixed {
                continue;
            }
            let src = layer_grad.row(i);
            for (acc, g) in self.grad.data_mut()[i * width..(i + 1) * width].iter_mut().zip(src) {
                *acc += g;
            }
        }
        Ok(())
    }

    pub fn grad(&self) -> &Tensor {
        &self.grad
    }

    /// Gradient w.r.t. the `k` predicted source-domain probabilities.
    /// Fixed rows are zero.
    pub fn source_columns(&self) -> Tensor {
        let width = self.grad.row_len();
        let k = width - 1;
        let data = self.grad.rows().flat_map(|r| r[..k].iter().copied()).collect();
        Tensor::from_parts(vec![self.grad.batch(), k], data)
    }
}

/// Side branch `dense(f -> h) -> ReLU -> dense(h -> k) -> softmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBranch {
    pub hidden: Dense,
    pub head: Dense,
}

#[derive(Debug, Clone)]
pub struct BranchCache {
    input: Tensor,
    hidden_pre: Tensor,
    hidden: Tensor,
    pub probs: Tensor,
}

impl DomainBranch {
    pub fn new(seed: u64, features: usize, hidden: usize, k: usize) -> Self {
        DomainBranch {
            hidden: Dense::new(crate::tensor::derive_seed(seed, 1), features, hidden),
            head: Dense::new(crate::tensor::derive_seed(seed, 2), hidden, k),
        }
    }

    pub fn domains(&self) -> usize {
        self.head.fan_out()
    }

    pub fn forward(&self, trunk_features: &Tensor) -> Result<BranchCache> {
        if trunk_features.rank() != 2 || trunk_features.row_len() != self.hidden.fan_in() {
            return Err(MdaError::shape(
                "predict_domains",
                format!("[b, {}]", self.hidden.fan_in()),
                format!("{:?}", trunk_features.shape()),
            ));
        }
        let hidden_pre = self.hidden.forward(trunk_features)?;
        let hidden = relu_forward(&hidden_pre);
        let logits = self.head.forward(&hidden)?;
        Ok(BranchCache {
            input: trunk_features.clone(),
            hidden_pre,
            hidden,
            probs: softmax(&logits),
        })
    }

    /// Backward from a gradient on the branch logits; returns the gradient
    /// w.r.t. the trunk features.
    pub fn backward(&mut self, cache: &BranchCache, grad_logits: &Tensor) -> Result<Tensor> {
        let g_hidden = self.head.backward(&cache.hidden, grad_logits)?;
        let g_pre = relu_backward(&cache.hidden_pre, &g_hidden)?;
        self.hidden.backward(&cache.input, &g_pre)
    }

    /// Backward from a gradient on the branch probabilities.
    pub fn backward_from_probs(&mut self, cache: &BranchCache, grad_probs: &Tensor) -> Result<Tensor> {
        let g_logits = softmax_backward(&cache.probs, grad_probs)?;
        self.backward(cache, &g_logits)
    }
}

/// Softmax over the `k` latent source domains for each row of trunk features.
pub fn predict_domains(branch: &DomainBranch, trunk_features: &Tensor) -> Result<Tensor> {
    Ok(branch.forward(trunk_features)?.probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rng_normal;

    #[test]
    fn single_domain_prediction_is_one() {
        let branch = DomainBranch::new(3, 5, 8, 1);
        let x = rng_normal(1, &[4, 5], 1.0).unwrap();
        let p = predict_domains(&branch, &x).unwrap();
        assert!(p.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_head_predicts_uniform() {
        let mut branch = DomainBranch::new(3, 5, 8, 4);
        branch.head.weight.value.fill(0.0);
        let x = rng_normal(1, &[3, 5], 1.0).unwrap();
        let p = predict_domains(&branch, &x).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn predictions_are_simplex_rows() {
        let branch = DomainBranch::new(11, 6, 16, 3);
        let x = rng_normal(2, &[20, 6], 3.0).unwrap();
        let p = predict_domains(&branch, &x).unwrap();
        for row in p.rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        assert!(predict_domains(&branch, &rng_normal(2, &[2, 5], 1.0).unwrap()).is_err());
    }

    #[test]
    fn merge_examples() {
        let pred = Tensor::from_rows(&[vec![0.3, 0.7], vec![0.4, 0.6], vec![0.3, 0.7]]).unwrap();
        let tags = [DomainTag::Target, DomainTag::KnownSource(1), DomainTag::UnknownSource];
        let a = merge_assignments(&pred, &tags).unwrap();
        assert_eq!(a.probs().row(0), &[0.0, 0.0, 1.0]);
        assert_eq!(a.probs().row(1), &[0.0, 1.0, 0.0]);
        assert_eq!(a.probs().row(2), &[0.3, 0.7, 0.0]);
        assert_eq!(a.fixed(), &[true, true, false]);
        a.validate(&tags).unwrap();
        assert!(merge_assignments(&pred, &[DomainTag::KnownSource(2); 3]).is_err());
    }

    #[test]
    fn broadcast_views_share_rows() {
        let pred = Tensor::from_rows(&[vec![0.25, 0.75]]).unwrap();
        let a = merge_assignments(&pred, &[DomainTag::UnknownSource]).unwrap();
        let views = broadcast_contract(a, 2);
        assert!(Arc::ptr_eq(&views[0], &views[1]));
        assert_eq!(views[0].probs().data(), views[1].probs().data());
    }

    #[test]
    fn gradient_buffer_sums_layers_and_masks_fixed() {
        let pred = Tensor::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let a = merge_assignments(&pred, &[DomainTag::UnknownSource, DomainTag::KnownSource(0)]).unwrap();
        let mut buf = AssignmentGrad::new(&a);
        let g1 = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).unwrap();
        let g2 = Tensor::from_rows(&[vec![0.5, -1.0, 0.0], vec![7.0, 7.0, 7.0]]).unwrap();
        buf.accumulate(&g1).unwrap();
        buf.accumulate(&g2).unwrap();
        assert_eq!(buf.grad().row(0), &[1.5, 1.0, 3.0]);
        assert_eq!(buf.grad().row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(buf.source_columns().data(), &[1.5, 1.0, 0.0, 0.0]);
    }
}
