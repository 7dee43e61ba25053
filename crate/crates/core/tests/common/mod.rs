//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod cases;

use mda_core::tensor::Tensor;

/// Central finite difference with step `1e-5 * max(1, |x|)`.
pub fn central_diff(x: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = 1e-5 * x.abs().max(1.0);
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// Relative error with a small absolute floor so entries that are zero up
/// to rounding are not divided by ~0.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Numerical gradient of `loss` w.r.t. every entry of `x`.
pub fn numeric_grad(x: &Tensor, loss: impl FnMut(&Tensor) -> f64) -> Tensor {
    numeric_grad_where(x, |_| true, loss)
}

/// Numerical gradient over the flat indices selected by `probe_at`; other
/// entries are left at zero.
pub fn numeric_grad_where(x: &Tensor, probe_at: impl Fn(usize) -> bool, mut loss: impl FnMut(&Tensor) -> f64) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    let mut probe = x.clone();
    for j in (0..x.len()).filter(|&j| probe_at(j)) {
        let x0 = x.data()[j];
        g.data_mut()[j] = central_diff(x0, |v| {
            probe.data_mut()[j] = v;
            loss(&probe)
        });
        probe.data_mut()[j] = x0;
    }
    g
}

pub fn max_rel_err(analytic: &Tensor, numeric: &Tensor) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(a, n)| rel_err(*a, *n))
        .fold(0.0, f64::max)
}

pub fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Plain batch normalization with biased variance over `[b, c]` or
/// `[b, c, h, w]`, written independently of the mDA code path.
pub fn reference_batchnorm(x: &Tensor, eps: f64) -> Tensor {
    let shape = x.shape().to_vec();
    let (b, c) = (shape[0], shape[1]);
    let p: usize = shape[2..].iter().product();
    let mut out = x.data().to_vec();
    for ch in 0..c {
        let vals: Vec<f64> = (0..b)
            .flat_map(|i| (0..p).map(move |q| (i * c + ch) * p + q))
            .map(|k| x.data()[k])
            .collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for i in 0..b {
            for q in 0..p {
                let k = (i * c + ch) * p + q;
                out[k] = (x.data()[k] - mean) / (var + eps).sqrt();
            }
        }
    }
    Tensor::new(shape, out).unwrap()
}
