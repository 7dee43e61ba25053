//! Dense `f64` tensors and the neural primitives the rest of the crate is
//! built from. Every primitive has an explicit analytic backward.
//!
//! Layout is row-major with the batch dimension first: `[batch, channels]`
//! or `[batch, channels, height, width]`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MdaError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking rank, element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(MdaError::InvalidArgument(format!("tensor rank must be 1..=4, got {}", shape.len())));
        }
        if shape.contains(&0) {
            return Err(MdaError::InvalidArgument(format!(
                "tensor dimensions must be positive, got {shape:?}"
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(MdaError::shape("Tensor::new", expected, data.len()));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(MdaError::NonFinite { index });
        }
        Ok(Tensor { shape, data })
    }

    /// Internal constructor for results of ops whose shapes are already known to agree.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![0.0; n])
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; n])
    }

    /// Rank-2 tensor from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(MdaError::InvalidArgument("ragged rows".into()));
        }
        Tensor::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Leading (batch) dimension.
    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    /// Number of elements per batch entry.
    pub fn row_len(&self) -> usize {
        self.data.len() / self.shape[0]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.row_len();
        &self.data[i * w..(i + 1) * w]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.row_len())
    }

    /// Same data, new shape with identical element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(MdaError::shape("reshape", self.data.len(), n));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    /// Collapses every non-batch dimension: `[b, ...] -> [b, prod(...)]`.
    pub fn flatten_batch(&self) -> Tensor {
        Tensor::from_parts(vec![self.batch(), self.row_len()], self.data.clone())
    }

    /// Gathers batch entries by index, keeping trailing dimensions.
    pub fn select_rows(&self, idx: &[usize]) -> Tensor {
        let w = self.row_len();
        let mut data = Vec::with_capacity(idx.len() * w);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        shape[0] = idx.len();
        Tensor::from_parts(shape, data)
    }

    /// Stacks single-sample tensors (without batch dimension) into a batch.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| MdaError::InvalidArgument("cannot stack zero tensors".into()))?;
        let mut shape = vec![items.len()];
        shape.extend_from_slice(first.shape());
        let mut data = Vec::with_capacity(items.len() * first.len());
        for t in items {
            if t.shape() != first.shape() {
                return Err(MdaError::shape("stack", format!("{:?}", first.shape()), format!("{:?}", t.shape())));
            }
            data.extend_from_slice(t.data());
        }
        Tensor::new(shape, data)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(MdaError::shape(
                "add_assign",
                format!("{:?}", self.shape),
                format!("{:?}", other.shape),
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// A trainable parameter with its gradient accumulator and momentum buffer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBlock {
    pub value: Tensor,
    pub grad: Tensor,
    pub momentum: Tensor,
}

impl ParamBlock {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        let momentum = Tensor::zeros(value.shape());
        ParamBlock { value, grad, momentum }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn accumulate(&mut self, grad: &Tensor) -> Result<()> {
        self.grad.add_assign(grad)
    }
}

fn expect_rank(op: &'static str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(MdaError::shape(
            op,
            format!("rank {rank}"),
            format!("rank {} {:?}", t.rank(), t.shape()),
        ));
    }
    Ok(())
}

/// `y = x W + bias` for `x: [b, in]`, `W: [in, out]`, `bias: [out]`.
pub fn dense_forward(x: &Tensor, w: &Tensor, bias: &Tensor) -> Result<Tensor> {
    expect_rank("dense_forward", x, 2)?;
    expect_rank("dense_forward", w, 2)?;
    let (b, n_in) = (x.shape[0], x.shape[1]);
    let (w_in, n_out) = (w.shape[0], w.shape[1]);
    if n_in != w_in {
        return Err(MdaError::shape("dense_forward", format!("x width {w_in}"), n_in));
    }
    if bias.shape() != [n_out] {
        return Err(MdaError::shape(
            "dense_forward",
            format!("bias [{n_out}]"),
            format!("{:?}", bias.shape()),
        ));
    }
    let mut y = Vec::with_capacity(b * n_out);
    for i in 0..b {
        y.extend_from_slice(bias.data());
        let out = &mut y[i * n_out..(i + 1) * n_out];
        for (k, &xv) in x.row(i).iter().enumerate() {
            if xv == 0.0 {
                continue;
            }
            let w_row = &w.data[k * n_out..(k + 1) * n_out];
            for (o, wv) in out.iter_mut().zip(w_row) {
                *o += xv * wv;
            }
        }
    }
    Ok(Tensor::from_parts(vec![b, n_out], y))
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub x: Tensor,
    pub w: Tensor,
    pub bias: Tensor,
}

pub fn dense_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    expect_rank("dense_backward", x, 2)?;
    expect_rank("dense_backward", w, 2)?;
    expect_rank("dense_backward", grad_out, 2)?;
    let (b, n_in) = (x.shape[0], x.shape[1]);
    let n_out = w.shape[1];
    if w.shape[0] != n_in || grad_out.shape() != [b, n_out] {
        return Err(MdaError::shape(
            "dense_backward",
            format!("x [{b},{}] grad [{b},{n_out}]", w.shape[0]),
            format!("x {:?} grad {:?}", x.shape(), grad_out.shape()),
        ));
    }
    let mut gx = vec![0.0; b * n_in];
    let mut gw = vec![0.0; n_in * n_out];
    let mut gb = vec![0.0; n_out];
    for i in 0..b {
        let g = grad_out.row(i);
        for (acc, gv) in gb.iter_mut().zip(g) {
            *acc += gv;
        }
        let xr = x.row(i);
        for k in 0..n_in {
            let w_row = &w.data[k * n_out..(k + 1) * n_out];
            gx[i * n_in + k] = w_row.iter().zip(g).map(|(a, b)| a * b).sum();
            let xv = xr[k];
            if xv != 0.0 {
                for (acc, gv) in gw[k * n_out..(k + 1) * n_out].iter_mut().zip(g) {
                    *acc += xv * gv;
                }
            }
        }
    }
    Ok(DenseGrads {
        x: Tensor::from_parts(vec![b, n_in], gx),
        w: Tensor::from_parts(vec![n_in, n_out], gw),
        bias: Tensor::from_parts(vec![n_out], gb),
    })
}

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Passes the gradient where `x > 0`; the subgradient at zero is zero.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    if x.shape() != grad_out.shape() {
        return Err(MdaError::shape(
            "relu_backward",
            format!("{:?}", x.shape()),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let data = x
        .data
        .iter()
        .zip(&grad_out.data)
        .map(|(&xv, &g)| if xv > 0.0 { g } else { 0.0 })
        .collect();
    Ok(Tensor::from_parts(x.shape.clone(), data))
}

/// Row-wise softmax over `[b, c]` logits, stabilized by max subtraction.
pub fn softmax(logits: &Tensor) -> Tensor {
    let c = logits.row_len();
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.rows() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|&z| (z - max).exp()));
        let sum: f64 = out[start..start + c].iter().sum();
        out[start..start + c].iter_mut().for_each(|p| *p /= sum);
    }
    Tensor::from_parts(logits.shape.clone(), out)
}

/// Vector-Jacobian product of softmax: maps a gradient w.r.t. the
/// probabilities to a gradient w.r.t. the logits.
pub fn softmax_backward(probs: &Tensor, grad_probs: &Tensor) -> Result<Tensor> {
    if probs.shape() != grad_probs.shape() {
        return Err(MdaError::shape(
            "softmax_backward",
            format!("{:?}", probs.shape()),
            format!("{:?}", grad_probs.shape()),
        ));
    }
    let mut out = Vec::with_capacity(probs.len());
    for (p, g) in probs.rows().zip(grad_probs.rows()) {
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        out.extend(p.iter().zip(g).map(|(pv, gv)| pv * (gv - dot)));
    }
    Ok(Tensor::from_parts(probs.shape.clone(), out))
}

/// Lower bound applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

pub(crate) fn safe_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

fn check_labels(probs: &Tensor, labels: &[usize]) -> Result<()> {
    expect_rank("cross_entropy", probs, 2)?;
    if labels.len() != probs.batch() {
        return Err(MdaError::shape("cross_entropy", probs.batch(), labels.len()));
    }
    let classes = probs.row_len();
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(MdaError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels` under row probabilities.
pub fn cross_entropy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let b = labels.len() as f64;
    Ok(-labels.iter().enumerate().map(|(i, &l)| safe_ln(probs.row(i)[l])).sum::<f64>() / b)
}

/// Gradient of `cross_entropy(softmax(z), labels)` w.r.t. the logits `z`:
/// `(probs - onehot) / b`.
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Result<Tensor> {
    check_labels(probs, labels)?;
    let b = labels.len() as f64;
    let c = probs.row_len();
    let mut g: Vec<f64> = probs.data.iter().map(|p| p / b).collect();
    for (i, &l) in labels.iter().enumerate() {
        g[i * c + l] -= 1.0 / b;
    }
    Ok(Tensor::from_parts(probs.shape.clone(), g))
}

/// Global average over spatial positions: `[b, c, h, w] -> [b, c]`.
pub fn spatial_mean(x: &Tensor) -> Result<Tensor> {
    expect_rank("spatial_mean", x, 4)?;
    let (b, c) = (x.shape[0], x.shape[1]);
    let hw = x.shape[2] * x.shape[3];
    let data = x.data.chunks(hw).map(|plane| plane.iter().sum::<f64>() / hw as f64).collect();
    Ok(Tensor::from_parts(vec![b, c], data))
}

pub fn spatial_mean_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if input_shape.len() != 4 || grad_out.shape() != [input_shape[0], input_shape[1]] {
        return Err(MdaError::shape(
            "spatial_mean_backward",
            format!("grad [{}, {}]", input_shape.first().unwrap_or(&0), input_shape.get(1).unwrap_or(&0)),
            format!("{:?}", grad_out.shape()),
        ));
    }
    let hw = input_shape[2] * input_shape[3];
    let scale = 1.0 / hw as f64;
    let data = grad_out.data.iter().flat_map(|&g| std::iter::repeat_n(g * scale, hw)).collect();
    Ok(Tensor::from_parts(input_shape.to_vec(), data))
}

/// Deterministic RNG used throughout the crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed for a named sub-stream (splitmix64 finalizer).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Zero-mean normal samples with the given standard deviation.
pub fn rng_normal(seed: u64, shape: &[usize], stddev: f64) -> Result<Tensor> {
    if !(stddev >= 0.0 && stddev.is_finite()) {
        return Err(MdaError::InvalidArgument(format!("stddev must be >= 0, got {stddev}")));
    }
    let n: usize = shape.iter().product();
    if stddev == 0.0 {
        return Ok(Tensor::zeros(shape));
    }
    let normal = Normal::new(0.0, stddev).expect("validated stddev");
    let mut rng = seeded_rng(seed);
    let data = (0..n).map(|_| normal.sample(&mut rng)).collect();
    Ok(Tensor::from_parts(shape.to_vec(), data))
}

/// Kaiming-normal weight `[fan_in, fan_out]` (stddev `sqrt(2 / fan_in)`).
pub fn kaiming_normal(seed: u64, fan_in: usize, fan_out: usize) -> Tensor {
    rng_normal(seed, &[fan_in, fan_out], (2.0 / fan_in as f64).sqrt()).expect("positive stddev")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn construction_rejects_bad_tensors() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(matches!(
            Tensor::new(vec![2], vec![1.0, f64::NAN]),
            Err(MdaError::NonFinite { index: 1 })
        ));
        assert!(Tensor::new(vec![1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
    }

    #[test]
    fn dense_forward_examples() {
        let x = t2(&[&[1.0, 2.0]]);
        let eye = t2(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let zero_b = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert_eq!(dense_forward(&x, &eye, &zero_b).unwrap().data(), &[1.0, 2.0]);

        let ones = t2(&[&[1.0, 1.0], &[1.0, 1.0]]);
        let b1 = Tensor::vector(vec![1.0, 1.0]).unwrap();
        assert_eq!(dense_forward(&x, &ones, &b1).unwrap().data(), &[4.0, 4.0]);

        let z = t2(&[&[0.0, 0.0]]);
        let b35 = Tensor::vector(vec![3.0, 5.0]).unwrap();
        let w = t2(&[&[0.3, -2.0], &[7.0, 1.5]]);
        assert_eq!(dense_forward(&z, &w, &b35).unwrap().data(), &[3.0, 5.0]);
    }

    #[test]
    fn dense_rejects_mismatched_shapes() {
        let x = t2(&[&[1.0, 2.0, 3.0]]);
        let w = t2(&[&[1.0], &[1.0]]);
        let b = Tensor::vector(vec![0.0]).unwrap();
        assert!(matches!(dense_forward(&x, &w, &b), Err(MdaError::ShapeMismatch { .. })));
        let x2 = t2(&[&[1.0, 2.0]]);
        let bad_bias = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert!(dense_forward(&x2, &w, &bad_bias).is_err());
        let bad_grad = t2(&[&[1.0, 1.0]]);
        assert!(dense_backward(&x2, &w, &bad_grad).is_err());
    }

    #[test]
    fn dense_backward_scalar_chain_rule() {
        let x = t2(&[&[2.0]]);
        let w = t2(&[&[3.0]]);
        let g = t2(&[&[1.0]]);
        let grads = dense_backward(&x, &w, &g).unwrap();
        assert_eq!(grads.x.data(), &[3.0]);
        assert_eq!(grads.w.data(), &[2.0]);
        assert_eq!(grads.bias.data(), &[1.0]);
    }

    #[test]
    fn dense_backward_zero_upstream() {
        let x = rng_normal(1, &[3, 4], 1.0).unwrap();
        let w = rng_normal(2, &[4, 5], 1.0).unwrap();
        let g = Tensor::zeros(&[3, 5]);
        let grads = dense_backward(&x, &w, &g).unwrap();
        assert!(grads
            .x
            .data()
            .iter()
            .chain(grads.w.data())
            .chain(grads.bias.data())
            .all(|&v| v == 0.0));
    }

    #[test]
    fn relu_examples() {
        let x = Tensor::vector(vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let x = Tensor::vector(vec![-1.0, 2.0]).unwrap();
        let g = Tensor::vector(vec![5.0, 5.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 5.0]);
        let at_zero = Tensor::vector(vec![0.0]).unwrap();
        let g1 = Tensor::vector(vec![3.0]).unwrap();
        assert_eq!(relu_backward(&at_zero, &g1).unwrap().data(), &[0.0]);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&t2(&[&[0.0, 0.0]])).data(), &[0.5, 0.5]);
        assert_eq!(softmax(&t2(&[&[-7.5], &[1e3]])).data(), &[1.0, 1.0]);
        let p = softmax(&t2(&[&[1f64.ln(), 3f64.ln()]]));
        assert!(close(p.data()[0], 0.25, 1e-15));
        assert!(close(p.data()[1], 0.75, 1e-15));
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&t2(&[&[1000.0, 1000.0, -1000.0]]));
        assert!(p.all_finite());
        assert!(close(p.data()[0], 0.5, 1e-15));
    }

    #[test]
    fn cross_entropy_examples() {
        let perfect = t2(&[&[0.0, 1.0], &[1.0, 0.0]]);
        assert_eq!(cross_entropy(&perfect, &[1, 0]).unwrap(), 0.0);
        let p = t2(&[&[0.8, 0.2]]);
        // -ln 0.8
        assert!(close(cross_entropy(&p, &[0]).unwrap(), 0.223_143_551_314_209_7, 1e-15));
        assert!(matches!(
            cross_entropy(&p, &[2]),
            Err(MdaError::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(softmax_cross_entropy_backward(&p, &[5]).is_err());
    }

    #[test]
    fn softmax_ce_backward_is_probs_minus_onehot() {
        let p = t2(&[&[0.8, 0.2], &[0.4, 0.6]]);
        let g = softmax_cross_entropy_backward(&p, &[0, 0]).unwrap();
        let expected = [-0.1, 0.1, -0.3, 0.3];
        for (a, b) in g.data().iter().zip(expected) {
            assert!(close(*a, b, 1e-15));
        }
    }

    #[test]
    fn spatial_mean_examples() {
        let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        assert_eq!(spatial_mean(&x).unwrap().data(), &[4.0]);

        let x = rng_normal(3, &[2, 3, 1, 1], 1.0).unwrap();
        assert_eq!(spatial_mean(&x).unwrap().data(), x.data());

        let g = Tensor::new(vec![1, 2], vec![4.0, 8.0]).unwrap();
        let gx = spatial_mean_backward(&[1, 2, 2, 2], &g).unwrap();
        assert_eq!(gx.data(), &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
        assert!(spatial_mean(&Tensor::zeros(&[2, 2])).is_err());
    }

    #[test]
    fn rng_normal_examples() {
        assert_eq!(rng_normal(9, &[4, 4], 1.0).unwrap(), rng_normal(9, &[4, 4], 1.0).unwrap());
        assert_ne!(rng_normal(9, &[4, 4], 1.0).unwrap(), rng_normal(10, &[4, 4], 1.0).unwrap());
        assert!(rng_normal(9, &[3, 3], 0.0).unwrap().data().iter().all(|&v| v == 0.0));
        let draws = rng_normal(5, &[100_000], 1.0).unwrap();
        let mean = draws.data().iter().sum::<f64>() / 1e5;
        assert!(mean.abs() < 0.02, "sample mean {mean}");
        assert!(rng_normal(1, &[2], -1.0).is_err());
    }

    #[test]
    fn kaiming_scale() {
        let w = kaiming_normal(4, 50, 400);
        let var = w.data().iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 2.0 / 50.0).abs() < 0.004, "var {var}");
    }

    #[test]
    fn select_and_stack() {
        let x = t2(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let s = x.select_rows(&[2, 0]);
        assert_eq!(s.shape(), &[2, 2]);
        assert_eq!(s.data(), &[5.0, 6.0, 1.0, 2.0]);
        let a = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let b = Tensor::vector(vec![3.0, 4.0]).unwrap();
        let st = Tensor::stack(&[&a, &b]).unwrap();
        assert_eq!(st.shape(), &[2, 2]);
    }
}
