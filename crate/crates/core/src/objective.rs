//! Training objective: source class log-loss, domain log-loss on samples with
//! revealed domains, class entropy on target samples and domain entropy on
//! source samples with unknown domain.
//!
//! Every term is evaluated on a row subset of a full probability tensor and
//! returns its gradient w.r.t. the logits that produced those probabilities
//! (zero outside the subset), so terms over the same head simply add.

use serde::{Deserialize, Serialize};

use crate::assignment::DomainTag;
use crate::error::{MdaError, Result};
use crate::tensor::{safe_ln, Tensor};

/// Multipliers of the domain log-loss and the two entropy terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_t: f64,
    pub lambda_c: f64,
    pub lambda_d: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_t: 0.5,
            lambda_c: 0.2,
            lambda_d: 0.2,
        }
    }
}

impl LossWeights {
    pub const SUPERVISED: LossWeights = LossWeights {
        lambda_t: 0.0,
        lambda_c: 0.0,
        lambda_d: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_t", self.lambda_t),
            ("lambda_c", self.lambda_c),
            ("lambda_d", self.lambda_d),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MdaError::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// One loss term: its value, the number of rows it averaged over, and its
/// gradient w.r.t. the logits of the whole probability tensor.
#[derive(Debug, Clone)]
pub struct Term {
    pub value: f64,
    pub count: usize,
    pub grad_logits: Tensor,
}

impl Term {
    fn zero(shape: &[usize]) -> Self {
        Term {
            value: 0.0,
            count: 0,
            grad_logits: Tensor::zeros(shape),
        }
    }
}

fn check_rows(op: &'static str, probs: &Tensor, rows: &[usize]) -> Result<()> {
    if probs.rank() != 2 {
        return Err(MdaError::shape(op, "rank 2", format!("{:?}", probs.shape())));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= probs.batch()) {
        return Err(MdaError::shape(op, format!("row < {}", probs.batch()), r));
    }
    Ok(())
}

fn log_loss(op: &'static str, probs: &Tensor, rows: &[usize], labels: &[usize]) -> Result<Term> {
    check_rows(op, probs, rows)?;
    if rows.len() != labels.len() {
        return Err(MdaError::shape(op, rows.len(), labels.len()));
    }
    let c = probs.row_len();
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(MdaError::LabelOutOfRange { label, classes: c });
    }
    if rows.is_empty() {
        return Ok(Term::zero(probs.shape()));
    }
    let n = rows.len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut value = 0.0;
    for (&r, &l) in rows.iter().zip(labels) {
        let p = probs.row(r);
        value -= safe_ln(p[l]);
        let g = &mut grad.data_mut()[r * c..(r + 1) * c];
        for (gj, pj) in g.iter_mut().zip(p) {
            *gj += pj / n;
        }
        g[l] -= 1.0 / n;
    }
    Ok(Term {
        value: value / n,
        count: rows.len(),
        grad_logits: grad,
    })
}

/// `-(1/n) sum ln p[label]` over labeled source rows.
pub fn class_log_loss(probs: &Tensor, rows: &[usize], labels: &[usize]) -> Result<Term> {
    if rows.is_empty() {
        return Err(MdaError::EmptyBatch("source"));
    }
    log_loss("class_log_loss", probs, rows, labels)
}

/// Log-loss of the domain branch on rows with revealed domains; zero when
/// there are none.
pub fn domain_log_loss(probs: &Tensor, rows: &[usize], labels: &[usize]) -> Result<Term> {
    log_loss("domain_log_loss", probs, rows, labels)
}

/// Mean row entropy `-(1/m) sum_i sum_j p ln p` with `0 ln 0 = 0`.
fn mean_entropy(op: &'static str, probs: &Tensor, rows: &[usize]) -> Result<Term> {
    check_rows(op, probs, rows)?;
    if rows.is_empty() {
        return Ok(Term::zero(probs.shape()));
    }
    let c = probs.row_len();
    let m = rows.len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut value = 0.0;
    for &r in rows {
        let p = probs.row(r);
        let h: f64 = -p.iter().map(|&pj| if pj > 0.0 { pj * safe_ln(pj) } else { 0.0 }).sum::<f64>();
        value += h;
        // d/dz_j of -sum p ln p under softmax is -p_j (ln p_j + H).
        let g = &mut grad.data_mut()[r * c..(r + 1) * c];
        for (gj, &pj) in g.iter_mut().zip(p) {
            *gj += -pj * (safe_ln(pj) + h) / m;
        }
    }
    Ok(Term {
        value: value / m,
        count: rows.len(),
        grad_logits: grad,
    })
}

/// Class-prediction entropy over target rows.
pub fn class_entropy(probs: &Tensor, rows: &[usize]) -> Result<Term> {
    if rows.is_empty() {
        return Err(MdaError::EmptyBatch("target"));
    }
    mean_entropy("class_entropy", probs, rows)
}

/// Domain-prediction entropy over source rows with unknown domain; zero
/// when there are none or `k = 1`.
pub fn domain_entropy(probs: &Tensor, rows: &[usize]) -> Result<Term> {
    if probs.rank() == 2 && probs.row_len() == 1 {
        check_rows("domain_entropy", probs, rows)?;
        return Ok(Term::zero(probs.shape()));
    }
    mean_entropy("domain_entropy", probs, rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub class_ce: f64,
    pub domain_ce: f64,
    pub h_c: f64,
    pub h_d: f64,
    pub total: f64,
    /// Rows behind each term: labeled source, revealed-domain source, target, unknown-domain source.
    pub n_class: usize,
    pub n_domain: usize,
    pub n_target: usize,
    pub n_unlabeled: usize,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.class_ce, self.domain_ce, self.h_c, self.h_d, self.total]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The four evaluated terms of one batch.
#[derive(Debug, Clone)]
pub struct LossParts {
    pub class_ce: Term,
    pub domain_ce: Term,
    pub h_c: Term,
    pub h_d: Term,
}

/// Weighted gradients for the classifier and domain-branch logits.
#[derive(Debug, Clone)]
pub struct ObjectiveGrads {
    pub class_logits: Tensor,
    pub domain_logits: Tensor,
}

/// `class_ce + lambda_t domain_ce + lambda_c h_c + lambda_d h_d`, with the
/// matching weighted sum of term gradients.
pub fn total_loss(parts: &LossParts, weights: &LossWeights) -> Result<(LossBreakdown, ObjectiveGrads)> {
    let total = parts.class_ce.value
        + weights.lambda_t * parts.domain_ce.value
        + weights.lambda_c * parts.h_c.value
        + weights.lambda_d * parts.h_d.value;
    let breakdown = LossBreakdown {
        class_ce: parts.class_ce.value,
        domain_ce: parts.domain_ce.value,
        h_c: parts.h_c.value,
        h_d: parts.h_d.value,
        total,
        n_class: parts.class_ce.count,
        n_domain: parts.domain_ce.count,
        n_target: parts.h_c.count,
        n_unlabeled: parts.h_d.count,
    };
    let mut class_logits = parts.class_ce.grad_logits.clone();
    axpy(&mut class_logits, weights.lambda_c, &parts.h_c.grad_logits)?;
    let mut domain_logits = parts.domain_ce.grad_logits.map(|v| v * weights.lambda_t);
    axpy(&mut domain_logits, weights.lambda_d, &parts.h_d.grad_logits)?;
    Ok((
        breakdown,
        ObjectiveGrads {
            class_logits,
            domain_logits,
        },
    ))
}

fn axpy(acc: &mut Tensor, scale: f64, x: &Tensor) -> Result<()> {
    if acc.shape() != x.shape() {
        return Err(MdaError::shape(
            "total_loss",
            format!("{:?}", acc.shape()),
            format!("{:?}", x.shape()),
        ));
    }
    if scale != 0.0 {
        for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
            *a += scale * b;
        }
    }
    Ok(())
}

/// Row subsets and labels of one batch, as consumed by [`evaluate`].
#[derive(Debug, Clone, Default)]
pub struct ObjectiveRows {
    /// Rows (of the class-probability tensor) with class labels, and the labels.
    pub class_rows: Vec<usize>,
    pub class_labels: Vec<usize>,
    /// Target rows of the class-probability tensor.
    pub target_rows: Vec<usize>,
    /// Rows (of the domain-probability tensor) with revealed domains, and the domains.
    pub domain_rows: Vec<usize>,
    pub domain_labels: Vec<usize>,
    /// Rows of the domain-probability tensor with unknown domain.
    pub unlabeled_rows: Vec<usize>,
}

impl ObjectiveRows {
    /// Builds the row subsets of a batch. `class_labels[i]` is `None` for
    /// rows whose class is hidden; domain rows are indexed among the source
    /// rows, in batch order.
    pub fn from_tags(tags: &[DomainTag], class_labels: &[Option<usize>]) -> Result<Self> {
        if tags.len() != class_labels.len() {
            return Err(MdaError::shape("objective rows", tags.len(), class_labels.len()));
        }
        let mut rows = ObjectiveRows::default();
        let mut source_index = 0;
        for (i, (tag, label)) in tags.iter().zip(class_labels).enumerate() {
            if let Some(y) = label {
                rows.class_rows.push(i);
                rows.class_labels.push(*y);
            }
            match tag {
                DomainTag::Target => rows.target_rows.push(i),
                DomainTag::KnownSource(d) => {
                    rows.domain_rows.push(source_index);
                    rows.domain_labels.push(*d);
                }
                DomainTag::UnknownSource => rows.unlabeled_rows.push(source_index),
            }
            if tag.is_source() {
                source_index += 1;
            }
        }
        Ok(rows)
    }
}

/// Evaluates all four terms. The class entropy is only required to have
/// target rows when `lambda_c > 0`.
pub fn evaluate(
    class_probs: &Tensor,
    domain_probs: &Tensor,
    rows: &ObjectiveRows,
    weights: &LossWeights,
) -> Result<(LossBreakdown, ObjectiveGrads)> {
    let class_ce = class_log_loss(class_probs, &rows.class_rows, &rows.class_labels)?;
    let h_c = if rows.target_rows.is_empty() && weights.lambda_c == 0.0 {
        Term::zero(class_probs.shape())
    } else {
        class_entropy(class_probs, &rows.target_rows)?
    };
    let domain_ce = domain_log_loss(domain_probs, &rows.domain_rows, &rows.domain_labels)?;
    let h_d = domain_entropy(domain_probs, &rows.unlabeled_rows)?;
    total_loss(
        &LossParts {
            class_ce,
            domain_ce,
            h_c,
            h_d,
        },
        weights,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn class_log_loss_examples() {
        let perfect = t(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(class_log_loss(&perfect, &[0, 1], &[0, 1]).unwrap().value, 0.0);
        let half = t(&[&[0.5, 0.5]]);
        assert!((class_log_loss(&half, &[0], &[1]).unwrap().value - std::f64::consts::LN_2).abs() <= 1e-12);
        let p = t(&[&[0.8, 0.2]]);
        assert!((class_log_loss(&p, &[0], &[0]).unwrap().value - 0.223_143_551_314_209_7).abs() <= 1e-12);
        assert!(matches!(class_log_loss(&p, &[], &[]), Err(MdaError::EmptyBatch("source"))));
    }

    #[test]
    fn domain_log_loss_examples() {
        let p = t(&[&[0.8, 0.2], &[0.1, 0.9]]);
        let empty = domain_log_loss(&p, &[], &[]).unwrap();
        assert_eq!(empty.value, 0.0);
        assert!(empty.grad_logits.data().iter().all(|&v| v == 0.0));
        assert!((domain_log_loss(&p, &[0], &[0]).unwrap().value - 0.223_143_551_314_209_7).abs() <= 1e-12);
        let perfect = t(&[&[0.0, 1.0]]);
        assert_eq!(domain_log_loss(&perfect, &[0], &[1]).unwrap().value, 0.0);
    }

    #[test]
    fn class_entropy_examples() {
        let uniform = Tensor::filled(&[3, 10], 0.1);
        assert!((class_entropy(&uniform, &[0, 1, 2]).unwrap().value - 10f64.ln()).abs() <= 1e-12);
        let onehot = t(&[&[0.0, 1.0, 0.0]]);
        assert_eq!(class_entropy(&onehot, &[0]).unwrap().value, 0.0);
        let p = t(&[&[0.25, 0.75]]);
        assert!((class_entropy(&p, &[0]).unwrap().value - 0.562_335_144_618_808_3).abs() <= 1e-12);
        assert!(matches!(class_entropy(&p, &[]), Err(MdaError::EmptyBatch("target"))));
    }

    #[test]
    fn domain_entropy_examples() {
        let single = t(&[&[1.0], &[1.0]]);
        assert_eq!(domain_entropy(&single, &[0, 1]).unwrap().value, 0.0);
        let uniform = Tensor::filled(&[2, 3], 1.0 / 3.0);
        assert!((domain_entropy(&uniform, &[0, 1]).unwrap().value - 3f64.ln()).abs() <= 1e-12);
        let p = t(&[&[0.9, 0.1]]);
        assert!((domain_entropy(&p, &[0]).unwrap().value - 0.325_082_973_391_448_2).abs() <= 1e-12);
        assert_eq!(domain_entropy(&p, &[]).unwrap().value, 0.0);
    }

    #[test]
    fn entropy_gradient_vanishes_at_uniform() {
        let uniform = Tensor::filled(&[2, 4], 0.25);
        let g = mean_entropy("test", &uniform, &[0, 1]).unwrap();
        assert!(g.grad_logits.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn total_recomposes_terms() {
        let class = t(&[&[0.7, 0.3], &[0.4, 0.6], &[0.5, 0.5]]);
        let dom = t(&[&[0.9, 0.1], &[0.2, 0.8]]);
        let rows = ObjectiveRows {
            class_rows: vec![0, 1],
            class_labels: vec![0, 1],
            target_rows: vec![2],
            domain_rows: vec![0],
            domain_labels: vec![0],
            unlabeled_rows: vec![1],
        };
        let w = LossWeights::default();
        let (b, _) = evaluate(&class, &dom, &rows, &w).unwrap();
        let recomposed = b.class_ce + w.lambda_t * b.domain_ce + w.lambda_c * b.h_c + w.lambda_d * b.h_d;
        assert!((b.total - recomposed).abs() <= 1e-12);
        assert_eq!((b.n_class, b.n_domain, b.n_target, b.n_unlabeled), (2, 1, 1, 1));

        let (sup, _) = evaluate(&class, &dom, &rows, &LossWeights::SUPERVISED).unwrap();
        assert_eq!(sup.total, sup.class_ce);
    }

    #[test]
    fn lambda_c_requires_target_rows() {
        let class = t(&[&[0.7, 0.3]]);
        let dom = t(&[&[1.0]]);
        let rows = ObjectiveRows {
            class_rows: vec![0],
            class_labels: vec![0],
            ..ObjectiveRows::default()
        };
        assert!(evaluate(&class, &dom, &rows, &LossWeights::default()).is_err());
        assert!(evaluate(&class, &dom, &rows, &LossWeights::SUPERVISED).is_ok());
    }

    #[test]
    fn default_weights() {
        let w = LossWeights::default();
        assert_eq!((w.lambda_t, w.lambda_c, w.lambda_d), (0.5, 0.2, 0.2));
        assert!(LossWeights { lambda_c: -1.0, ..w }.validate().is_err());
    }
}
