//! Image transforms used to turn one digit set into several pseudo-domains.
//! All operate on `[n, c, h, w]` tensors and are deterministic.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MdaError, Result};
use crate::tensor::{derive_seed, seeded_rng, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageTransform {
    /// `x -> 1 - x`.
    Invert,
    /// Additive Gaussian noise; sample `i` uses stream `i` of `seed`.
    Noise { sigma: f64, seed: u64 },
    /// Counter-clockwise rotation by `quarters * 90` degrees.
    Rot90 { quarters: u32 },
    /// `x -> scale * x + offset`.
    Affine { scale: f64, offset: f64 },
}

impl ImageTransform {
    fn validate(&self) -> Result<()> {
        let ok = match self {
            ImageTransform::Noise { sigma, .. } => sigma.is_finite() && *sigma >= 0.0,
            ImageTransform::Affine { scale, offset } => scale.is_finite() && offset.is_finite(),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(MdaError::InvalidArgument(format!("invalid image transform {self:?}")))
        }
    }
}

fn rotate_quarter(plane: &[f64], h: usize, w: usize) -> Vec<f64> {
    // Output is [w, h]: out[r][c] = in[c][w - 1 - r].
    let mut out = vec![0.0; h * w];
    for r in 0..w {
        for c in 0..h {
            out[r * h + c] = plane[c * w + (w - 1 - r)];
        }
    }
    out
}

/// Applies `t` to every sample of `x` (`[n, c, h, w]`).
pub fn domain_transform(x: &Tensor, t: &ImageTransform) -> Result<Tensor> {
    t.validate()?;
    let &[n, c, h, w] = x.shape() else {
        return Err(MdaError::shape("domain_transform", "[n, c, h, w]", format!("{:?}", x.shape())));
    };
    match *t {
        ImageTransform::Invert => Ok(x.map(|v| 1.0 - v)),
        ImageTransform::Affine { scale, offset } => Ok(x.map(|v| scale * v + offset)),
        ImageTransform::Noise { sigma, seed } => {
            let mut out = x.clone();
            if sigma == 0.0 {
                return Ok(out);
            }
            let dist = Normal::new(0.0, sigma).expect("validated sigma");
            let row = c * h * w;
            for (i, sample) in out.data_mut().chunks_exact_mut(row).enumerate() {
                let mut rng = seeded_rng(derive_seed(seed, i as u64));
                for v in sample {
                    *v += dist.sample(&mut rng);
                }
            }
            Ok(out)
        }
        ImageTransform::Rot90 { quarters } => {
            let (mut hh, mut ww) = (h, w);
            let mut data = x.data().to_vec();
            for _ in 0..quarters % 4 {
                data = data.chunks_exact(hh * ww).flat_map(|p| rotate_quarter(p, hh, ww)).collect();
                std::mem::swap(&mut hh, &mut ww);
            }
            Tensor::new(vec![n, c, hh, ww], data)
        }
    }
}
