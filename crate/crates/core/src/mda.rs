//! Multi-domain alignment (mDA) layer.
//!
//! Each input channel is modelled as a mixture with one component per domain
//! (`k` latent source domains plus the target). Given per-sample assignment
//! weights `w[i, d]`, the layer
//!
//! 1. normalizes each weight column over the batch, `alpha[i, d] = w[i, d] / sum_j w[j, d]`,
//! 2. estimates per-domain moments with those weights,
//!    `mu_d = sum_i alpha[i, d] x_i`, `var_d = sum_i alpha[i, d] (x_i - mu_d)^2`,
//! 3. mixes the per-domain standardized inputs back together,
//!    `y_i = sum_d w[i, d] (x_i - mu_d) / sqrt(var_d + eps)`.
//!
//! For rank-4 inputs a sample's weight is spread uniformly over its `h * w`
//! spatial positions, so the statistics cover every activation of a channel.
//! The backward pass differentiates through the statistics and through the
//! alpha normalizer, producing gradients for both the input and the
//! assignment weights.

use serde::{Deserialize, Serialize};

use crate::error::{MdaError, Result};
use crate::tensor::{ParamBlock, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MdaConfig {
    pub eps: f64,
    /// Learned per-channel scale and shift, shared by all domains.
    pub affine: bool,
    /// Weight of the current batch in the running-statistics update.
    pub running_momentum: f64,
    /// Domains whose total batch weight is at or below this are treated as empty.
    pub zero_mass_threshold: f64,
}

impl Default for MdaConfig {
    fn default() -> Self {
        MdaConfig {
            eps: 1e-5,
            affine: true,
            running_momentum: 0.1,
            zero_mass_threshold: 1e-6,
        }
    }
}

impl MdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(MdaError::InvalidArgument(format!("eps must be >= 0, got {}", self.eps)));
        }
        if !(self.running_momentum > 0.0 && self.running_momentum <= 1.0) {
            return Err(MdaError::InvalidArgument(format!(
                "running_momentum must be in (0, 1], got {}",
                self.running_momentum
            )));
        }
        if self.zero_mass_threshold.is_nan() || self.zero_mass_threshold < 0.0 {
            return Err(MdaError::InvalidArgument("zero_mass_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

/// Batch, channel and spatial extents of a layer input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    batch: usize,
    channels: usize,
    spatial: usize,
}

impl Layout {
    fn of(x: &Tensor) -> Result<Self> {
        match x.shape() {
            &[b, c] => Ok(Layout {
                batch: b,
                channels: c,
                spatial: 1,
            }),
            &[b, c, h, w] => Ok(Layout {
                batch: b,
                channels: c,
                spatial: h * w,
            }),
            other => Err(MdaError::shape("mda", "rank 2 or 4", format!("{other:?}"))),
        }
    }

    #[inline]
    fn offset(&self, i: usize, ch: usize) -> usize {
        (i * self.channels + ch) * self.spatial
    }
}

/// Per-domain normalized assignment weights `alpha[i, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatrix {
    rows: usize,
    domains: usize,
    alpha: Vec<f64>,
    mass: Vec<f64>,
    zero_mass: Vec<bool>,
}

impl AlphaMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn domains(&self) -> usize {
        self.domains
    }

    pub fn get(&self, i: usize, d: usize) -> f64 {
        self.alpha[i * self.domains + d]
    }

    pub fn column(&self, d: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, d)).collect()
    }

    /// Column sums of the raw weights.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn is_zero_mass(&self, d: usize) -> bool {
        self.zero_mass[d]
    }
}

/// `alpha[i, d] = w[i, d] / sum_j w[j, d]`. Columns whose sum is at or below
/// `zero_mass_threshold` are flagged and left all-zero.
pub fn compute_alpha(weights: &Tensor, zero_mass_threshold: f64) -> Result<AlphaMatrix> {
    if weights.rank() != 2 {
        return Err(MdaError::shape("compute_alpha", "rank 2", format!("{:?}", weights.shape())));
    }
    let (rows, domains) = (weights.shape()[0], weights.shape()[1]);
    if let Some(v) = weights.data().iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(MdaError::InvalidArgument(format!(
            "assignment weights must be finite and non-negative, found {v}"
        )));
    }
    let mut mass = vec![0.0; domains];
    for row in weights.rows() {
        for (m, w) in mass.iter_mut().zip(row) {
            *m += w;
        }
    }
    let zero_mass: Vec<bool> = mass.iter().map(|&m| m <= zero_mass_threshold).collect();
    let mut alpha = vec![0.0; rows * domains];
    for (i, row) in weights.rows().enumerate() {
        for d in 0..domains {
            if !zero_mass[d] {
                alpha[i * domains + d] = row[d] / mass[d];
            }
        }
    }
    Ok(AlphaMatrix {
        rows,
        domains,
        alpha,
        mass,
        zero_mass,
    })
}

/// Per-domain, per-channel mean and biased variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainStats {
    pub domains: usize,
    pub channels: usize,
    /// `[domain * channels + channel]`
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub total_weight: Vec<f64>,
    /// False for zero-mass domains, whose moments are meaningless.
    pub valid: Vec<bool>,
}

impl DomainStats {
    pub fn mean(&self, d: usize, ch: usize) -> f64 {
        self.mean[d * self.channels + ch]
    }

    pub fn var(&self, d: usize, ch: usize) -> f64 {
        self.var[d * self.channels + ch]
    }
}

/// Weighted moments per domain. Each sample's alpha is split evenly over its
/// spatial positions.
pub fn weighted_moments(x: &Tensor, alpha: &AlphaMatrix) -> Result<DomainStats> {
    let lay = Layout::of(x)?;
    if alpha.rows() != lay.batch {
        return Err(MdaError::shape("weighted_moments", lay.batch, alpha.rows()));
    }
    let (domains, channels) = (alpha.domains(), lay.channels);
    let inv_p = 1.0 / lay.spatial as f64;
    let data = x.data();
    let mut mean = vec![0.0; domains * channels];
    let mut var = vec![0.0; domains * channels];
    for d in 0..domains {
        if alpha.is_zero_mass(d) {
            continue;
        }
        for ch in 0..channels {
            let mut mu = 0.0;
            for i in 0..lay.batch {
                let a = alpha.get(i, d);
                if a == 0.0 {
                    continue;
                }
                let o = lay.offset(i, ch);
                mu += a * inv_p * data[o..o + lay.spatial].iter().sum::<f64>();
            }
            let mut v = 0.0;
            for i in 0..lay.batch {
                let a = alpha.get(i, d);
                if a == 0.0 {
                    continue;
                }
                let o = lay.offset(i, ch);
                v += a * inv_p * data[o..o + lay.spatial].iter().map(|xv| (xv - mu) * (xv - mu)).sum::<f64>();
            }
            mean[d * channels + ch] = mu;
            var[d * channels + ch] = v.max(0.0);
        }
    }
    Ok(DomainStats {
        domains,
        channels,
        mean,
        var,
        total_weight: alpha.mass().to_vec(),
        valid: (0..domains).map(|d| !alpha.is_zero_mass(d)).collect(),
    })
}

/// Exponential running averages of per-domain statistics, used at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub domains: usize,
    pub channels: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    /// Number of batch updates received per domain; zero means uninitialized.
    pub updates: Vec<u64>,
}

impl RunningStats {
    pub fn new(domains: usize, channels: usize) -> Self {
        RunningStats {
            domains,
            channels,
            mean: vec![0.0; domains * channels],
            var: vec![1.0; domains * channels],
            updates: vec![0; domains],
        }
    }

    pub fn is_initialized(&self, d: usize) -> bool {
        self.updates[d] > 0
    }

    pub fn mean(&self, d: usize, ch: usize) -> f64 {
        self.mean[d * self.channels + ch]
    }

    pub fn var(&self, d: usize, ch: usize) -> f64 {
        self.var[d * self.channels + ch]
    }

    /// Folds in batch statistics for every valid domain. A domain's first
    /// update copies the batch estimate.
    pub fn update(&mut self, batch: &DomainStats, momentum: f64) {
        debug_assert_eq!((self.domains, self.channels), (batch.domains, batch.channels));
        for d in 0..self.domains {
            if !batch.valid[d] {
                continue;
            }
            let rho = if self.updates[d] == 0 { 1.0 } else { momentum };
            for ch in 0..self.channels {
                let k = d * self.channels + ch;
                self.mean[k] = (1.0 - rho) * self.mean[k] + rho * batch.mean[k];
                self.var[k] = ((1.0 - rho) * self.var[k] + rho * batch.var[k]).max(0.0);
            }
            self.updates[d] += 1;
        }
    }

    /// Overwrites every valid domain with the given statistics.
    pub fn set_from(&mut self, batch: &DomainStats) {
        for d in 0..self.domains {
            if !batch.valid[d] {
                continue;
            }
            for ch in 0..self.channels {
                let k = d * self.channels + ch;
                self.mean[k] = batch.mean[k];
                self.var[k] = batch.var[k];
            }
            self.updates[d] = self.updates[d].max(1);
        }
    }
}

/// Where a domain's normalization statistics came from in a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatSource {
    /// Estimated on the batch; gradients flow through them.
    Batch,
    /// Zero-mass domain with residual weight, normalized with running stats (constants).
    Running,
    /// No weight anywhere in the batch; contributes nothing.
    Unused,
}

/// Intermediates retained by [`mda_forward`] for [`mda_backward`].
#[derive(Debug, Clone)]
pub struct MdaCache {
    layout_shape: Vec<usize>,
    x: Tensor,
    weights: Tensor,
    fixed: Vec<bool>,
    alpha: AlphaMatrix,
    batch_stats: DomainStats,
    sources: Vec<StatSource>,
    /// Per domain: mean and `1 / sqrt(var + eps)` actually used, `[d * c + ch]`.
    used_mean: Vec<f64>,
    used_inv_std: Vec<f64>,
    /// Per domain standardized input, `[d][flat index]` (empty for unused domains).
    xhat: Vec<Vec<f64>>,
    /// Mixture output before the affine map.
    mixed: Vec<f64>,
    gamma: Option<Vec<f64>>,
}

impl MdaCache {
    pub fn batch_stats(&self) -> &DomainStats {
        &self.batch_stats
    }

    pub fn alpha(&self) -> &AlphaMatrix {
        &self.alpha
    }

    pub fn sources(&self) -> &[StatSource] {
        &self.sources
    }

    /// Standardized input for domain `d` (`(x - mu_d) / sqrt(var_d + eps)`), same layout as `x`.
    pub fn standardized(&self, d: usize) -> Option<Tensor> {
        let v = &self.xhat[d];
        (!v.is_empty()).then(|| Tensor::from_parts(self.layout_shape.clone(), v.clone()))
    }
}

#[derive(Debug, Clone)]
pub struct MdaGrads {
    pub x: Tensor,
    /// Gradient w.r.t. the assignment weights; rows marked fixed are zero.
    pub weights: Tensor,
    pub gamma: Option<Tensor>,
    pub beta: Option<Tensor>,
}

/// Per-channel affine parameters applied after mixing.
#[derive(Debug, Clone, Copy)]
pub struct AffineRef<'a> {
    pub gamma: &'a Tensor,
    pub beta: &'a Tensor,
}

fn check_inputs(x: &Tensor, weights: &Tensor, fixed: Option<&[bool]>, affine: Option<AffineRef<'_>>) -> Result<Layout> {
    let lay = Layout::of(x)?;
    if weights.rank() != 2 || weights.shape()[0] != lay.batch {
        return Err(MdaError::shape(
            "mda",
            format!("weights [{}, domains]", lay.batch),
            format!("{:?}", weights.shape()),
        ));
    }
    if let Some(fixed) = fixed {
        if fixed.len() != lay.batch {
            return Err(MdaError::shape("mda fixed mask", lay.batch, fixed.len()));
        }
    }
    if let Some(a) = affine {
        if a.gamma.shape() != [lay.channels] || a.beta.shape() != [lay.channels] {
            return Err(MdaError::shape(
                "mda affine",
                format!("[{}]", lay.channels),
                format!("{:?} / {:?}", a.gamma.shape(), a.beta.shape()),
            ));
        }
    }
    Ok(lay)
}

fn column_has_weight(weights: &Tensor, d: usize) -> bool {
    weights.rows().any(|r| r[d] > 0.0)
}

/// Training-mode forward pass. Updates `running` for every domain with
/// nonzero batch mass.
pub fn mda_forward(
    x: &Tensor,
    weights: &Tensor,
    fixed: &[bool],
    cfg: &MdaConfig,
    affine: Option<AffineRef<'_>>,
    running: &mut RunningStats,
) -> Result<(Tensor, MdaCache)> {
    let lay = check_inputs(x, weights, Some(fixed), affine)?;
    let domains = weights.shape()[1];
    if running.domains != domains || running.channels != lay.channels {
        return Err(MdaError::shape(
            "mda running stats",
            format!("{domains} domains x {} channels", lay.channels),
            format!("{} x {}", running.domains, running.channels),
        ));
    }
    let alpha = compute_alpha(weights, cfg.zero_mass_threshold)?;
    let batch_stats = weighted_moments(x, &alpha)?;

    let c = lay.channels;
    let mut sources = Vec::with_capacity(domains);
    let mut used_mean = vec![0.0; domains * c];
    let mut used_inv_std = vec![0.0; domains * c];
    for d in 0..domains {
        let source = if !alpha.is_zero_mass(d) {
            StatSource::Batch
        } else if column_has_weight(weights, d) {
            if !running.is_initialized(d) {
                return Err(MdaError::UninitializedDomainStats { domain: d });
            }
            StatSource::Running
        } else {
            StatSource::Unused
        };
        for ch in 0..c {
            let (m, v) = match source {
                StatSource::Batch => (batch_stats.mean(d, ch), batch_stats.var(d, ch)),
                StatSource::Running => (running.mean(d, ch), running.var(d, ch)),
                StatSource::Unused => continue,
            };
            used_mean[d * c + ch] = m;
            used_inv_std[d * c + ch] = 1.0 / (v + cfg.eps).sqrt();
        }
        sources.push(source);
    }

    let (xhat, mixed) = standardize_and_mix(x, weights, lay, &sources, &used_mean, &used_inv_std)?;
    let y = apply_affine(&mixed, lay, affine);
    running.update(&batch_stats, cfg.running_momentum);

    let cache = MdaCache {
        layout_shape: x.shape().to_vec(),
        x: x.clone(),
        weights: weights.clone(),
        fixed: fixed.to_vec(),
        alpha,
        batch_stats,
        sources,
        used_mean,
        used_inv_std,
        xhat,
        mixed,
        gamma: affine.map(|a| a.gamma.data().to_vec()),
    };
    Ok((Tensor::from_parts(x.shape().to_vec(), y), cache))
}

fn standardize_and_mix(
    x: &Tensor,
    weights: &Tensor,
    lay: Layout,
    sources: &[StatSource],
    mean: &[f64],
    inv_std: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let c = lay.channels;
    let data = x.data();
    let mut mixed = vec![0.0; data.len()];
    let mut xhat = Vec::with_capacity(sources.len());
    for (d, source) in sources.iter().enumerate() {
        if *source == StatSource::Unused {
            xhat.push(Vec::new());
            continue;
        }
        let mut xh = vec![0.0; data.len()];
        for i in 0..lay.batch {
            let w = weights.row(i)[d];
            for ch in 0..c {
                let (m, s) = (mean[d * c + ch], inv_std[d * c + ch]);
                let o = lay.offset(i, ch);
                for p in o..o + lay.spatial {
                    let v = (data[p] - m) * s;
                    xh[p] = v;
                    mixed[p] += w * v;
                }
            }
        }
        xhat.push(xh);
    }
    if let Some(index) = mixed.iter().position(|v| !v.is_finite()) {
        return Err(MdaError::NonFinite { index });
    }
    Ok((xhat, mixed))
}

fn apply_affine(mixed: &[f64], lay: Layout, affine: Option<AffineRef<'_>>) -> Vec<f64> {
    let Some(a) = affine else {
        return mixed.to_vec();
    };
    let mut y = mixed.to_vec();
    for i in 0..lay.batch {
        for ch in 0..lay.channels {
            let (g, b) = (a.gamma.data()[ch], a.beta.data()[ch]);
            let o = lay.offset(i, ch);
            for v in &mut y[o..o + lay.spatial] {
                *v = g * *v + b;
            }
        }
    }
    y
}

/// Exact gradients of [`mda_forward`] w.r.t. the input, the assignment
/// weights (through both the mixing sum and the alpha-weighted statistics),
/// and the affine parameters.
pub fn mda_backward(cache: &MdaCache, grad_y: &Tensor) -> Result<MdaGrads> {
    if grad_y.shape() != cache.layout_shape.as_slice() {
        return Err(MdaError::shape(
            "mda_backward",
            format!("{:?}", cache.layout_shape),
            format!("{:?}", grad_y.shape()),
        ));
    }
    let lay = Layout::of(&cache.x)?;
    let c = lay.channels;
    let domains = cache.sources.len();
    let g = grad_y.data();
    let x = cache.x.data();
    let inv_p = 1.0 / lay.spatial as f64;

    // Gradient w.r.t. the pre-affine mixture, plus the affine gradients.
    let (gz, grad_gamma, grad_beta) = match &cache.gamma {
        Some(gamma) => {
            let mut gz = vec![0.0; g.len()];
            let mut gg = vec![0.0; c];
            let mut gb = vec![0.0; c];
            for i in 0..lay.batch {
                for ch in 0..c {
                    let o = lay.offset(i, ch);
                    for p in o..o + lay.spatial {
                        gz[p] = g[p] * gamma[ch];
                        gg[ch] += g[p] * cache.mixed[p];
                        gb[ch] += g[p];
                    }
                }
            }
            (gz, Some(Tensor::from_parts(vec![c], gg)), Some(Tensor::from_parts(vec![c], gb)))
        }
        None => (g.to_vec(), None, None),
    };

    let mut grad_x = vec![0.0; g.len()];
    let mut grad_w = vec![0.0; lay.batch * domains];
    let mut grad_alpha = vec![0.0; lay.batch];

    for d in 0..domains {
        let source = cache.sources[d];
        if source == StatSource::Unused {
            continue;
        }
        let xh = &cache.xhat[d];
        let w_col: Vec<f64> = cache.weights.rows().map(|r| r[d]).collect();

        // Direct mixing path: dy_i / dw_{i,d} = xhat_{i,d}.
        for i in 0..lay.batch {
            let o = lay.offset(i, 0);
            let n = c * lay.spatial;
            grad_w[i * domains + d] = gz[o..o + n].iter().zip(&xh[o..o + n]).map(|(a, b)| a * b).sum();
        }

        if source == StatSource::Running {
            for (i, &wi) in w_col.iter().enumerate() {
                for ch in 0..c {
                    let s = cache.used_inv_std[d * c + ch];
                    let o = lay.offset(i, ch);
                    for p in o..o + lay.spatial {
                        grad_x[p] += wi * s * gz[p];
                    }
                }
            }
            continue;
        }

        grad_alpha.iter_mut().for_each(|v| *v = 0.0);
        for ch in 0..c {
            let mu = cache.used_mean[d * c + ch];
            let s = cache.used_inv_std[d * c + ch];
            // Upstream gradient on xhat_d is w_{i,d} * gz.
            let mut s1 = 0.0;
            let mut s2 = 0.0;
            for (i, &wi) in w_col.iter().enumerate() {
                if wi == 0.0 {
                    continue;
                }
                let o = lay.offset(i, ch);
                for p in o..o + lay.spatial {
                    let gh = wi * gz[p];
                    s1 += gh;
                    s2 += gh * xh[p];
                }
            }
            let d_mean = -s * s1;
            let d_var = -0.5 * s * s * s2;
            for i in 0..lay.batch {
                let a = cache.alpha.get(i, d) * inv_p;
                let o = lay.offset(i, ch);
                let mut ga = 0.0;
                for p in o..o + lay.spatial {
                    grad_x[p] += s * (w_col[i] * gz[p] - a * (s1 + xh[p] * s2));
                    let centered = x[p] - mu;
                    ga += d_mean * centered + d_var * centered * centered;
                }
                grad_alpha[i] += ga * inv_p;
            }
        }
        // Through alpha_{j,d} = w_{j,d} / sum_i w_{i,d}.
        let mass = cache.alpha.mass()[d];
        let weighted: f64 = (0..lay.batch).map(|j| cache.alpha.get(j, d) * grad_alpha[j]).sum();
        for i in 0..lay.batch {
            grad_w[i * domains + d] += (grad_alpha[i] - weighted) / mass;
        }
    }

    for (i, &fixed) in cache.fixed.iter().enumerate() {
        if fixed {
            grad_w[i * domains..(i + 1) * domains].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    Ok(MdaGrads {
        x: Tensor::from_parts(cache.layout_shape.clone(), grad_x),
        weights: Tensor::from_parts(vec![lay.batch, domains], grad_w),
        gamma: grad_gamma,
        beta: grad_beta,
    })
}

/// Inference-mode pass with running statistics; no state is mutated.
pub fn mda_infer(x: &Tensor, weights: &Tensor, running: &RunningStats, cfg: &MdaConfig, affine: Option<AffineRef<'_>>) -> Result<Tensor> {
    let lay = check_inputs(x, weights, None, affine)?;
    let domains = weights.shape()[1];
    if running.domains != domains || running.channels != lay.channels {
        return Err(MdaError::shape(
            "mda_infer running stats",
            format!("{domains} x {}", lay.channels),
            format!("{} x {}", running.domains, running.channels),
        ));
    }
    if let Some(v) = weights.data().iter().find(|v| **v < 0.0) {
        return Err(MdaError::InvalidArgument(format!("negative assignment weight {v}")));
    }
    let c = lay.channels;
    let mut sources = Vec::with_capacity(domains);
    let mut mean = vec![0.0; domains * c];
    let mut inv_std = vec![0.0; domains * c];
    for d in 0..domains {
        if !column_has_weight(weights, d) {
            sources.push(StatSource::Unused);
            continue;
        }
        if !running.is_initialized(d) {
            return Err(MdaError::UninitializedDomainStats { domain: d });
        }
        for ch in 0..c {
            mean[d * c + ch] = running.mean(d, ch);
            inv_std[d * c + ch] = 1.0 / (running.var(d, ch) + cfg.eps).sqrt();
        }
        sources.push(StatSource::Running);
    }
    let (_, mixed) = standardize_and_mix(x, weights, lay, &sources, &mean, &inv_std)?;
    Ok(Tensor::from_parts(x.shape().to_vec(), apply_affine(&mixed, lay, affine)))
}

/// An mDA layer instance: configuration, shared affine parameters and
/// running statistics for `domains` mixture components over `channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdaLayer {
    pub config: MdaConfig,
    pub gamma: ParamBlock,
    pub beta: ParamBlock,
    pub running: RunningStats,
}

impl MdaLayer {
    pub fn new(channels: usize, domains: usize, config: MdaConfig) -> Self {
        MdaLayer {
            config,
            gamma: ParamBlock::new(Tensor::filled(&[channels], 1.0)),
            beta: ParamBlock::new(Tensor::zeros(&[channels])),
            running: RunningStats::new(domains, channels),
        }
    }

    pub fn domains(&self) -> usize {
        self.running.domains
    }

    fn affine(&self) -> Option<AffineRef<'_>> {
        self.config.affine.then_some(AffineRef {
            gamma: &self.gamma.value,
            beta: &self.beta.value,
        })
    }

    pub fn forward_train(&mut self, x: &Tensor, weights: &Tensor, fixed: &[bool]) -> Result<(Tensor, MdaCache)> {
        let MdaLayer {
            config,
            gamma,
            beta,
            running,
        } = self;
        let affine = config.affine.then_some(AffineRef {
            gamma: &gamma.value,
            beta: &beta.value,
        });
        mda_forward(x, weights, fixed, config, affine, running)
    }

    /// Backward pass; accumulates the affine gradients into the layer's
    /// parameter blocks and returns all gradients.
    pub fn backward(&mut self, cache: &MdaCache, grad_y: &Tensor) -> Result<MdaGrads> {
        let grads = mda_backward(cache, grad_y)?;
        if let (Some(gg), Some(gb)) = (&grads.gamma, &grads.beta) {
            self.gamma.accumulate(gg)?;
            self.beta.accumulate(gb)?;
        }
        Ok(grads)
    }

    pub fn infer(&self, x: &Tensor, weights: &Tensor) -> Result<Tensor> {
        mda_infer(x, weights, &self.running, &self.config, self.affine())
    }
}
