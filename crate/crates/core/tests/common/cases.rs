//! The randomized mDA-layer configuration grid shared by the layer and
//! acceptance suites.

use mda_core::mda::{mda_forward, AffineRef, MdaConfig, RunningStats};
use mda_core::tensor::{rng_normal, seeded_rng, Tensor};
use rand::Rng;

use super::dot;

#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub batch: usize,
    pub k: usize,
    pub channels: usize,
    pub rank4: bool,
    pub mixed: bool,
    pub seed: u64,
}

impl Case {
    pub fn x_shape(&self) -> Vec<usize> {
        if self.rank4 {
            vec![self.batch, self.channels, 2, 3]
        } else {
            vec![self.batch, self.channels]
        }
    }
}

/// Random assignment weights: soft rows are free and positive everywhere;
/// in mixed mode every third row is one-hot and fixed.
pub fn weights(case: &Case) -> (Tensor, Vec<bool>) {
    let d = case.k + 1;
    let mut rng = seeded_rng(case.seed ^ 0xABCD);
    let mut data = Vec::new();
    let mut fixed = Vec::new();
    for i in 0..case.batch {
        if case.mixed && i % 3 == 0 {
            let mut row = vec![0.0; d];
            row[i % d] = 1.0;
            data.extend(row);
            fixed.push(true);
        } else {
            let raw: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.iter().map(|v| v / s));
            fixed.push(false);
        }
    }
    (Tensor::new(vec![case.batch, d], data).unwrap(), fixed)
}

pub fn all_cases() -> Vec<Case> {
    let mut cases = Vec::new();
    let mut seed = 100;
    for batch in [4, 8] {
        for k in [1, 2, 3] {
            for channels in [1, 3] {
                for rank4 in [false, true] {
                    for mixed in [false, true] {
                        seed += 1;
                        cases.push(Case {
                            batch,
                            k,
                            channels,
                            rank4,
                            mixed,
                            seed,
                        });
                    }
                }
            }
        }
    }
    cases
}

pub struct Setup {
    pub x: Tensor,
    pub w: Tensor,
    pub fixed: Vec<bool>,
    pub gamma: Tensor,
    pub beta: Tensor,
    pub upstream: Tensor,
    pub cfg: MdaConfig,
}

impl Setup {
    pub fn new(case: &Case) -> Self {
        let shape = case.x_shape();
        let (w, fixed) = weights(case);
        Setup {
            x: rng_normal(case.seed, &shape, 1.5).unwrap(),
            w,
            fixed,
            gamma: rng_normal(case.seed + 7, &[case.channels], 0.5).unwrap().map(|v| v + 1.0),
            beta: rng_normal(case.seed + 8, &[case.channels], 0.5).unwrap(),
            upstream: rng_normal(case.seed + 9, &shape, 1.0).unwrap(),
            cfg: MdaConfig::default(),
        }
    }

    pub fn loss(&self, x: &Tensor, w: &Tensor, gamma: &Tensor, beta: &Tensor) -> f64 {
        let mut running = RunningStats::new(w.shape()[1], gamma.len());
        let affine = AffineRef { gamma, beta };
        let (y, _) = mda_forward(x, w, &self.fixed, &self.cfg, Some(affine), &mut running).unwrap();
        dot(&y, &self.upstream)
    }
}
