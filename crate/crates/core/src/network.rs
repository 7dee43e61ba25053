//! Full model: a shared trunk, a classification branch whose affine layers
//! are followed by mDA layers, and a domain-prediction branch attached after
//! the first trunk block.
//!
//! ```text
//! input -> [dense -> relu] (trunk block 1) -+-> [dense -> relu]* -> classifier
//!                                           |
//!                                           +-> branch -> softmax over k domains
//! classifier: ([dense -> mDA -> relu])* -> dense -> mDA -> softmax
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::assignment::{broadcast_contract, merge_assignments, AssignmentGrad, AssignmentMatrix, BranchCache, DomainBranch, DomainTag};
use crate::error::{MdaError, Result};
use crate::layers::Dense;
use crate::mda::{MdaCache, MdaConfig, MdaLayer};
use crate::tensor::{derive_seed, relu_backward, relu_forward, softmax, softmax_backward, ParamBlock, Tensor};

/// How the normalization layers group samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// One mixture component per latent source domain plus the target.
    DomainAligned,
    /// Plain batch normalization over the whole batch (single component).
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Flattened input width.
    pub input_dim: usize,
    pub trunk_widths: Vec<usize>,
    /// Hidden widths of the classification branch (the output layer is added).
    pub classifier_widths: Vec<usize>,
    pub classes: usize,
    /// Number of latent source domains.
    pub k: usize,
    /// Indices of classifier affine layers followed by an mDA layer; `None` means all.
    pub mda_after: Option<Vec<usize>>,
    pub mda: MdaConfig,
    pub branch_width: usize,
    pub normalization: Normalization,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_dim: 16,
            trunk_widths: vec![64],
            classifier_widths: vec![64],
            classes: 10,
            k: 2,
            mda_after: None,
            mda: MdaConfig::default(),
            branch_width: 64,
            normalization: Normalization::DomainAligned,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn classifier_layers(&self) -> usize {
        self.classifier_widths.len() + 1
    }

    fn has_mda(&self, layer: usize) -> bool {
        self.mda_after.as_ref().is_none_or(|v| v.contains(&layer))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(MdaError::InvalidArgument(m));
        if self.input_dim == 0 || self.trunk_widths.is_empty() || self.trunk_widths.contains(&0) {
            return bad("input_dim and trunk widths must be positive, with at least one trunk block".into());
        }
        if self.classifier_widths.contains(&0) || self.branch_width == 0 {
            return bad("layer widths must be positive".into());
        }
        if self.classes < 2 {
            return bad(format!("classes must be >= 2, got {}", self.classes));
        }
        if self.k == 0 {
            return bad("k must be >= 1".into());
        }
        let layers = self.classifier_layers();
        if let Some(after) = &self.mda_after {
            if after.is_empty() {
                return bad("at least one mDA layer is required".into());
            }
            if let Some(l) = after.iter().find(|&&l| l >= layers) {
                return bad(format!("mda_after index {l} out of range for {layers} classifier layers"));
            }
        }
        self.mda.validate()
    }
}

/// Parameter groups, used for gradient reports and optimizer filtering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Trunk,
    Classifier,
    MdaAffine,
    Branch,
}

impl ParamGroup {
    pub fn name(self) -> &'static str {
        match self {
            ParamGroup::Trunk => "trunk",
            ParamGroup::Classifier => "classifier",
            ParamGroup::MdaAffine => "mda_affine",
            ParamGroup::Branch => "branch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub config: ModelConfig,
    pub trunk: Vec<Dense>,
    pub branch: DomainBranch,
    pub classifier: Vec<Dense>,
    /// One slot per classifier layer.
    pub norms: Vec<Option<MdaLayer>>,
}

#[derive(Debug, Clone)]
struct DenseRecord {
    input: Tensor,
    /// Layer output before the ReLU (after normalization when present).
    output: Tensor,
    mda: Option<MdaCache>,
}

/// Everything the backward pass needs from one training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardRecord {
    /// Class probabilities, `[b, classes]`.
    pub class_probs: Tensor,
    /// Domain probabilities of source rows, `[n_source, k]`.
    pub domain_probs: Tensor,
    /// Batch indices of the rows in `domain_probs`.
    pub source_rows: Vec<usize>,
    pub assignment: AssignmentMatrix,
    pub tags: Vec<DomainTag>,
    trunk: Vec<DenseRecord>,
    branch: BranchCache,
    classifier: Vec<DenseRecord>,
}

impl ForwardRecord {
    /// Batch statistics of every mDA layer, in classifier order.
    pub fn mda_caches(&self) -> impl Iterator<Item = &MdaCache> {
        self.classifier.iter().filter_map(|r| r.mda.as_ref())
    }
}

impl Network {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let seed = config.seed;
        let mut width = config.input_dim;
        let mut trunk = Vec::new();
        for (j, &w) in config.trunk_widths.iter().enumerate() {
            trunk.push(Dense::new(derive_seed(seed, 100 + j as u64), width, w));
            width = w;
        }
        let branch = DomainBranch::new(derive_seed(seed, 200), config.trunk_widths[0], config.branch_width, config.k);
        let domains = match config.normalization {
            Normalization::DomainAligned => config.k + 1,
            Normalization::Pooled => 1,
        };
        let mut classifier = Vec::new();
        let mut norms = Vec::new();
        let outs = config.classifier_widths.iter().copied().chain(std::iter::once(config.classes));
        for (l, w) in outs.enumerate() {
            classifier.push(Dense::new(derive_seed(seed, 300 + l as u64), width, w));
            norms.push(config.has_mda(l).then(|| MdaLayer::new(w, domains, config.mda.clone())));
            width = w;
        }
        Ok(Network {
            config,
            trunk,
            branch,
            classifier,
            norms,
        })
    }

    pub fn k(&self) -> usize {
        self.config.k
    }

    pub fn mda_layers(&self) -> impl Iterator<Item = &MdaLayer> {
        self.norms.iter().flatten()
    }

    fn flatten_input(&self, features: &Tensor) -> Result<Tensor> {
        let x = features.flatten_batch();
        if x.row_len() != self.config.input_dim {
            return Err(MdaError::shape(
                "network input",
                format!("width {}", self.config.input_dim),
                x.row_len(),
            ));
        }
        Ok(x)
    }

    fn run_trunk(&self, x: Tensor) -> Result<(Vec<DenseRecord>, Tensor)> {
        let mut records = Vec::with_capacity(self.trunk.len());
        let mut h = x;
        for dense in &self.trunk {
            let pre = dense.forward(&h)?;
            let next = relu_forward(&pre);
            records.push(DenseRecord {
                input: h,
                output: pre,
                mda: None,
            });
            h = next;
        }
        Ok((records, h))
    }

    /// Post-ReLU output of the first trunk block, where the branch attaches.
    fn branch_input(trunk: &[DenseRecord]) -> Tensor {
        relu_forward(&trunk[0].output)
    }

    fn assignment_for(&self, branch_probs: &Tensor, source_rows: &[usize], tags: &[DomainTag]) -> Result<AssignmentMatrix> {
        let k = self.config.k;
        let mut pred = Tensor::zeros(&[tags.len(), k]);
        for (r, &i) in source_rows.iter().enumerate() {
            pred.data_mut()[i * k..(i + 1) * k].copy_from_slice(branch_probs.row(r));
        }
        merge_assignments(&pred, tags)
    }

    /// Weights and fixed mask actually fed to the normalization layers.
    fn norm_inputs(&self, assignment: &AssignmentMatrix) -> (Tensor, Vec<bool>) {
        match self.config.normalization {
            Normalization::DomainAligned => (assignment.probs().clone(), assignment.fixed().to_vec()),
            Normalization::Pooled => (Tensor::filled(&[assignment.rows(), 1], 1.0), vec![true; assignment.rows()]),
        }
    }

    /// Training-mode forward pass over a mixed source/target batch. Updates
    /// the running statistics of every mDA layer.
    pub fn forward_train(&mut self, features: &Tensor, tags: &[DomainTag]) -> Result<ForwardRecord> {
        let x = self.flatten_input(features)?;
        if tags.len() != x.batch() {
            return Err(MdaError::shape("forward_train tags", x.batch(), tags.len()));
        }
        let source_rows: Vec<usize> = (0..tags.len()).filter(|&i| tags[i].is_source()).collect();
        if source_rows.is_empty() {
            return Err(MdaError::EmptyBatch("source"));
        }
        let (trunk, mut h) = self.run_trunk(x)?;
        let branch = self.branch.forward(&Self::branch_input(&trunk).select_rows(&source_rows))?;
        let assignment = self.assignment_for(&branch.probs, &source_rows, tags)?;
        let (weights, fixed) = self.norm_inputs(&assignment);
        let views = broadcast_contract(assignment.clone(), self.norms.iter().flatten().count());
        debug_assert!(views.iter().all(|v| v.probs() == assignment.probs()));

        let last = self.classifier.len() - 1;
        let mut classifier = Vec::with_capacity(self.classifier.len());
        for (l, (dense, norm)) in self.classifier.iter().zip(self.norms.iter_mut()).enumerate() {
            let pre = dense.forward(&h)?;
            let (out, cache) = match norm {
                Some(layer) => {
                    let (y, c) = layer.forward_train(&pre, &weights, &fixed)?;
                    (y, Some(c))
                }
                None => (pre, None),
            };
            let next = if l < last { relu_forward(&out) } else { softmax(&out) };
            classifier.push(DenseRecord {
                input: h,
                output: out,
                mda: cache,
            });
            h = next;
        }
        Ok(ForwardRecord {
            class_probs: h,
            domain_probs: branch.probs.clone(),
            source_rows,
            assignment,
            tags: tags.to_vec(),
            trunk,
            branch,
            classifier,
        })
    }

    /// Accumulates gradients of every parameter block given the loss
    /// gradients w.r.t. the class logits (`[b, classes]`) and the domain
    /// logits of the source rows (`[n_source, k]`). The branch additionally
    /// receives the assignment gradients of all mDA layers.
    pub fn backward_train(&mut self, record: &ForwardRecord, class_logits: &Tensor, domain_logits: &Tensor) -> Result<()> {
        if class_logits.shape() != record.class_probs.shape() || domain_logits.shape() != record.domain_probs.shape() {
            return Err(MdaError::shape(
                "backward_train",
                format!("{:?} / {:?}", record.class_probs.shape(), record.domain_probs.shape()),
                format!("{:?} / {:?}", class_logits.shape(), domain_logits.shape()),
            ));
        }
        let aligned = self.config.normalization == Normalization::DomainAligned;
        let mut assign_grad = AssignmentGrad::new(&record.assignment);
        let last = self.classifier.len() - 1;
        let mut g = class_logits.clone();
        for l in (0..self.classifier.len()).rev() {
            let rec = &record.classifier[l];
            if l < last {
                g = relu_backward(&rec.output, &g)?;
            }
            if let (Some(layer), Some(cache)) = (self.norms[l].as_mut(), rec.mda.as_ref()) {
                let mg = layer.backward(cache, &g)?;
                if aligned {
                    assign_grad.accumulate(&mg.weights)?;
                }
                g = mg.x;
            }
            g = self.classifier[l].backward(&rec.input, &g)?;
        }

        let grad_pred = assign_grad.source_columns().select_rows(&record.source_rows);
        let mut branch_logits = softmax_backward(&record.domain_probs, &grad_pred)?;
        branch_logits.add_assign(domain_logits)?;
        let g_branch = self.branch.backward(&record.branch, &branch_logits)?;

        for j in (0..self.trunk.len()).rev() {
            let rec = &record.trunk[j];
            if j == 0 {
                let w = g.row_len();
                for (r, &i) in record.source_rows.iter().enumerate() {
                    for (a, b) in g.data_mut()[i * w..(i + 1) * w].iter_mut().zip(g_branch.row(r)) {
                        *a += b;
                    }
                }
            }
            g = relu_backward(&rec.output, &g)?;
            g = self.trunk[j].backward(&rec.input, &g)?;
        }
        Ok(())
    }

    /// Inference with running statistics. Target rows use the target
    /// column; other rows run the domain branch.
    pub fn forward_eval(&self, features: &Tensor, tags: &[DomainTag]) -> Result<Tensor> {
        let x = self.flatten_input(features)?;
        if tags.len() != x.batch() {
            return Err(MdaError::shape("forward_eval tags", x.batch(), tags.len()));
        }
        let (trunk, mut h) = self.run_trunk(x)?;
        let source_rows: Vec<usize> = (0..tags.len()).filter(|&i| tags[i].is_source()).collect();
        let branch_probs = if source_rows.is_empty() {
            Tensor::zeros(&[1, self.config.k])
        } else {
            self.branch.forward(&Self::branch_input(&trunk).select_rows(&source_rows))?.probs
        };
        let assignment = self.assignment_for(&branch_probs, &source_rows, tags)?;
        let (weights, _) = self.norm_inputs(&assignment);
        let last = self.classifier.len() - 1;
        for (l, (dense, norm)) in self.classifier.iter().zip(&self.norms).enumerate() {
            let mut out = dense.forward(&h)?;
            if let Some(layer) = norm {
                out = layer.infer(&out, &weights)?;
            }
            h = if l < last { relu_forward(&out) } else { softmax(&out) };
        }
        Ok(h)
    }

    /// Domain-branch probabilities for every row, `[b, k]`.
    pub fn predict_domains(&self, features: &Tensor) -> Result<Tensor> {
        let (trunk, _) = self.run_trunk(self.flatten_input(features)?)?;
        Ok(self.branch.forward(&Self::branch_input(&trunk))?.probs)
    }

    /// Overwrites running statistics with the batch statistics of a record.
    pub fn set_running_from_record(&mut self, record: &ForwardRecord) {
        for (norm, rec) in self.norms.iter_mut().zip(&record.classifier) {
            if let (Some(layer), Some(cache)) = (norm.as_mut(), rec.mda.as_ref()) {
                layer.running.set_from(cache.batch_stats());
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<(ParamGroup, &mut ParamBlock)> {
        let mut out = Vec::new();
        for d in &mut self.trunk {
            out.extend(d.params_mut().map(|p| (ParamGroup::Trunk, p)));
        }
        for d in &mut self.classifier {
            out.extend(d.params_mut().map(|p| (ParamGroup::Classifier, p)));
        }
        for layer in self.norms.iter_mut().flatten() {
            if layer.config.affine {
                out.push((ParamGroup::MdaAffine, &mut layer.gamma));
                out.push((ParamGroup::MdaAffine, &mut layer.beta));
            }
        }
        out.extend(self.branch.hidden.params_mut().map(|p| (ParamGroup::Branch, p)));
        out.extend(self.branch.head.params_mut().map(|p| (ParamGroup::Branch, p)));
        out
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| MdaError::io(path, e))
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MdaError::io(path, e))?;
        let net: Network = serde_json::from_str(&text)?;
        net.config.validate()?;
        Ok(net)
    }
}
