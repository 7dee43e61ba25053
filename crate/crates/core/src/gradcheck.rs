//! Finite-difference audit of every analytic gradient, grouped by parameter
//! kind. Used by the `gradcheck` command.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use crate::assignment::DomainTag;
use crate::error::Result;
use crate::mda::{mda_backward, mda_forward, AffineRef, MdaConfig, RunningStats};
use crate::network::{ModelConfig, Network};
use crate::objective::{evaluate, LossWeights, ObjectiveRows};
use crate::tensor::{derive_seed, rng_normal, seeded_rng, Tensor};

/// Layer-level tolerance (mDA input, assignment, affine).
pub const LAYER_TOLERANCE: f64 = 1e-5;
/// Whole-model tolerance.
pub const MODEL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub probes: usize,
}

impl GroupReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= self.tolerance
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradReport {
    pub groups: BTreeMap<String, GroupReport>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.groups.values().all(GroupReport::passed)
    }

    pub fn offenders(&self) -> Vec<&str> {
        self.groups.iter().filter(|(_, g)| !g.passed()).map(|(k, _)| k.as_str()).collect()
    }

    fn record(&mut self, group: &str, tolerance: f64, err: f64) {
        let g = self.groups.entry(group.to_string()).or_insert(GroupReport {
            max_rel_err: 0.0,
            tolerance,
            probes: 0,
        });
        g.max_rel_err = g.max_rel_err.max(err);
        g.probes += 1;
    }
}

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    /// Probe at most this many entries per parameter block.
    pub max_probes_per_block: usize,
    pub seed: u64,
    /// Negative control: perturb the analytic assignment gradient by 10%.
    pub corrupt: bool,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            max_probes_per_block: 32,
            seed: 0,
            corrupt: false,
        }
    }
}

fn central_diff(x0: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let h = 1e-5 * x0.abs().max(1.0);
    (f(x0 + h) - f(x0 - h)) / (2.0 * h)
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

fn probe_indices(len: usize, max: usize, seed: u64) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        sample(&mut seeded_rng(seed), len, max).into_vec()
    }
}

/// Soft weights, with every other row fixed one-hot when `mixed`.
fn random_weights(seed: u64, b: usize, domains: usize, mixed: bool) -> (Tensor, Vec<bool>) {
    let mut rng = seeded_rng(seed);
    let mut data = Vec::with_capacity(b * domains);
    let mut fixed = Vec::with_capacity(b);
    for i in 0..b {
        let fix = mixed && i % 2 == 0;
        if fix {
            let hot = i / 2 % domains;
            data.extend((0..domains).map(|d| if d == hot { 1.0 } else { 0.0 }));
        } else {
            let raw: Vec<f64> = (0..domains).map(|_| rng.random_range(0.1..1.0)).collect();
            let s: f64 = raw.iter().sum();
            data.extend(raw.into_iter().map(|v| v / s));
        }
        fixed.push(fix);
    }
    (Tensor::new(vec![b, domains], data).expect("finite weights"), fixed)
}

/// One point of the layer grid.
#[derive(Debug, Clone, Copy)]
struct LayerCase {
    id: u64,
    b: usize,
    k: usize,
    c: usize,
    spatial: bool,
    mixed: bool,
}

fn check_layer(report: &mut GradReport, opts: &GradcheckOptions, case: LayerCase) -> Result<()> {
    let LayerCase {
        b, k, c, spatial, mixed, ..
    } = case;
    let seed = derive_seed(opts.seed, case.id);
    let shape: Vec<usize> = if spatial { vec![b, c, 2, 3] } else { vec![b, c] };
    let x = rng_normal(derive_seed(seed, 1), &shape, 1.5)?;
    let (w, fixed) = random_weights(derive_seed(seed, 2), b, k + 1, mixed);
    let gamma = rng_normal(derive_seed(seed, 3), &[c], 1.0)?;
    let beta = rng_normal(derive_seed(seed, 4), &[c], 1.0)?;
    let probe = rng_normal(derive_seed(seed, 5), &shape, 1.0)?;
    let cfg = MdaConfig::default();

    let loss = |x: &Tensor, w: &Tensor, g: &Tensor, bt: &Tensor| -> f64 {
        let mut running = RunningStats::new(k + 1, c);
        let affine = Some(AffineRef { gamma: g, beta: bt });
        match mda_forward(x, w, &fixed, &cfg, affine, &mut running) {
            Ok((y, _)) => y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum(),
            Err(_) => f64::NAN,
        }
    };
    let mut running = RunningStats::new(k + 1, c);
    let (_, cache) = mda_forward(
        &x,
        &w,
        &fixed,
        &cfg,
        Some(AffineRef {
            gamma: &gamma,
            beta: &beta,
        }),
        &mut running,
    )?;
    let grads = mda_backward(&cache, &probe)?;
    let scale = if opts.corrupt { 1.1 } else { 1.0 };

    let cap = opts.max_probes_per_block;
    for j in probe_indices(x.len(), cap, derive_seed(seed, 6)) {
        let mut p = x.clone();
        let n = central_diff(x.data()[j], |v| {
            p.data_mut()[j] = v;
            loss(&p, &w, &gamma, &beta)
        });
        report.record("mda_input", LAYER_TOLERANCE, rel_err(grads.x.data()[j], n));
    }
    let free: Vec<usize> = (0..w.len()).filter(|&j| !fixed[j / (k + 1)]).collect();
    for &j in &free {
        let mut p = w.clone();
        let n = central_diff(w.data()[j], |v| {
            p.data_mut()[j] = v;
            loss(&x, &p, &gamma, &beta)
        });
        report.record("assignment", LAYER_TOLERANCE, rel_err(scale * grads.weights.data()[j], n));
    }
    let (gg, gb) = (grads.gamma.expect("affine on"), grads.beta.expect("affine on"));
    for j in 0..c {
        let mut p = gamma.clone();
        let n = central_diff(gamma.data()[j], |v| {
            p.data_mut()[j] = v;
            loss(&x, &w, &p, &beta)
        });
        report.record("mda_affine", LAYER_TOLERANCE, rel_err(gg.data()[j], n));
        let mut p = beta.clone();
        let n = central_diff(beta.data()[j], |v| {
            p.data_mut()[j] = v;
            loss(&x, &w, &gamma, &p)
        });
        report.record("mda_affine", LAYER_TOLERANCE, rel_err(gb.data()[j], n));
    }
    Ok(())
}

fn check_model(report: &mut GradReport, opts: &GradcheckOptions, model: &ModelConfig) -> Result<()> {
    use DomainTag::*;
    let mut net = Network::new(model.clone())?;
    // Zero-initialized biases can put a ReLU input exactly on its kink, where
    // central differences and the subgradient disagree; probe a nearby
    // generic point instead.
    for (i, (_, p)) in net.params_mut().into_iter().enumerate() {
        let jitter = rng_normal(derive_seed(opts.seed, 500 + i as u64), p.value.shape(), 0.05)?;
        p.value.add_assign(&jitter)?;
    }
    let k = model.k;
    let tags = vec![
        UnknownSource,
        KnownSource(k - 1),
        UnknownSource,
        KnownSource(0),
        UnknownSource,
        Target,
        Target,
        Target,
    ];
    let labels: Vec<Option<usize>> = (0..tags.len()).map(|i| (tags[i] != Target).then_some(i % model.classes)).collect();
    let x = rng_normal(derive_seed(opts.seed, 77), &[tags.len(), model.input_dim], 1.0)?;
    let rows = ObjectiveRows::from_tags(&tags, &labels)?;
    let weights = LossWeights::default();

    net.zero_grad();
    let rec = net.forward_train(&x, &tags)?;
    let (_, g) = evaluate(&rec.class_probs, &rec.domain_probs, &rows, &weights)?;
    net.backward_train(&rec, &g.class_logits, &g.domain_logits)?;
    let blocks: Vec<_> = net.params_mut().into_iter().map(|(grp, p)| (grp, p.grad.clone())).collect();

    for (b, (group, grad)) in blocks.iter().enumerate() {
        for j in probe_indices(grad.len(), opts.max_probes_per_block, derive_seed(opts.seed, 1000 + b as u64)) {
            let mut probe = net.clone();
            let x0 = probe.params_mut()[b].1.value.data()[j];
            let n = central_diff(x0, |v| {
                probe.params_mut()[b].1.value.data_mut()[j] = v;
                match probe.forward_train(&x, &tags) {
                    Ok(r) => evaluate(&r.class_probs, &r.domain_probs, &rows, &weights).map_or(f64::NAN, |l| l.0.total),
                    Err(_) => f64::NAN,
                }
            });
            report.record(group.name(), MODEL_TOLERANCE, rel_err(grad.data()[j], n));
        }
    }
    Ok(())
}

/// Runs the layer grid and the whole-model check for `model`.
pub fn run(model: &ModelConfig, opts: &GradcheckOptions) -> Result<GradReport> {
    let mut report = GradReport { groups: BTreeMap::new() };
    let mut id = 0;
    for b in [4, 8] {
        for k in [1, 2, 3] {
            for c in [1, 3] {
                for spatial in [false, true] {
                    for mixed in [false, true] {
                        check_layer(
                            &mut report,
                            opts,
                            LayerCase {
                                id,
                                b,
                                k,
                                c,
                                spatial,
                                mixed,
                            },
                        )?;
                        id += 1;
                    }
                }
            }
        }
    }
    check_model(&mut report, opts, model)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 4,
            trunk_widths: vec![6],
            classifier_widths: vec![5],
            classes: 3,
            k: 2,
            branch_width: 4,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn stock_gradients_pass_every_group() {
        let r = run(&tiny(), &GradcheckOptions::default()).unwrap();
        for g in ["trunk", "classifier", "mda_affine", "branch", "assignment", "mda_input"] {
            assert!(r.groups.contains_key(g), "missing {g}");
        }
        assert!(r.passed(), "{:?}", r.groups);
    }

    #[test]
    fn corrupted_gradient_is_caught() {
        let opts = GradcheckOptions {
            corrupt: true,
            ..GradcheckOptions::default()
        };
        let r = run(&tiny(), &opts).unwrap();
        assert!(!r.passed());
        assert_eq!(r.offenders(), vec!["assignment"]);
    }
}
