//! Training loop, evaluation and experiment runners.

pub mod experiments;
pub mod metrics;
pub mod optim;

use serde::{Deserialize, Serialize};

use crate::assignment::DomainTag;
use crate::config::ExperimentConfig;
use crate::data::{BatchSampler, BatchSpec, Dataset, LatentTruth};
use crate::error::{MdaError, Result};
use crate::network::{Network, ParamGroup};
use crate::objective::{evaluate, LossBreakdown, LossWeights, ObjectiveRows};
use crate::tensor::derive_seed;

pub use metrics::{accuracy, domain_discovery_metrics, write_metrics_csv, MetricsRow, METRICS_HEADER};
pub use optim::{lr_at, sgd_step, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: Schedule,
    pub loss: LossWeights,
    pub batch: BatchSpec,
    /// Mixed into the batch sampler seed.
    pub seed: u64,
    /// Log a metrics row every `eval_every` iterations (and after the last one).
    pub eval_every: usize,
    /// Parameter groups the optimizer leaves untouched.
    pub frozen: Vec<ParamGroup>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1200,
            base_lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-6,
            schedule: Schedule::STEP,
            loss: LossWeights::default(),
            batch: BatchSpec::default(),
            seed: 0,
            eval_every: 100,
            frozen: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(MdaError::InvalidArgument("iterations must be >= 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(MdaError::InvalidArgument(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(MdaError::InvalidArgument("momentum must be in [0, 1) and weight_decay >= 0".into()));
        }
        if self.eval_every == 0 {
            return Err(MdaError::InvalidArgument("eval_every must be >= 1".into()));
        }
        if self.loss.lambda_c > 0.0 && self.batch.target_quota == 0 {
            return Err(MdaError::InvalidArgument("lambda_c > 0 needs target_quota >= 1".into()));
        }
        self.loss.validate()
    }
}

/// Held-out evaluation data. The latent truth lives here and nowhere on the
/// training path.
#[derive(Debug, Clone)]
pub struct Evaluator {
    target_test: Dataset,
    target_labels: Vec<usize>,
    source: Dataset,
    truth: LatentTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalScores {
    pub accuracy: f64,
    pub nmi: f64,
    pub purity: f64,
}

impl Evaluator {
    pub fn new(target_test: Dataset, source: Dataset, truth: LatentTruth) -> Result<Self> {
        let target_labels = target_test.dense_labels()?;
        if truth.domains().len() != source.len() {
            return Err(MdaError::shape("Evaluator::new", source.len(), truth.domains().len()));
        }
        Ok(Evaluator {
            target_test,
            target_labels,
            source,
            truth,
        })
    }

    /// Target accuracy with running statistics, plus NMI and purity of the
    /// branch's argmax domain on the source set.
    pub fn evaluate(&self, net: &Network) -> Result<EvalScores> {
        let tags = vec![DomainTag::Target; self.target_test.len()];
        let probs = net.forward_eval(self.target_test.features(), &tags)?;
        let accuracy = accuracy(&probs, &self.target_labels)?;
        let predicted = metrics::argmax_rows(&net.predict_domains(self.source.features())?);
        let (nmi, purity) = domain_discovery_metrics(&predicted, self.truth.domains())?;
        Ok(EvalScores { accuracy, nmi, purity })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    pub last_loss: LossBreakdown,
    pub scores: EvalScores,
}

/// Loads the data of `cfg`, builds the model (input width taken from the
/// data) and trains it with the configured seeds.
pub fn train_experiment(cfg: &ExperimentConfig) -> Result<(Network, TrainOutcome)> {
    let splits = cfg.data.load(cfg.data_base.as_deref())?;
    let mut model = cfg.model.clone();
    model.input_dim = splits.source.sample_shape().iter().product();
    let mut net = Network::new(model)?;
    let eval = Evaluator::new(splits.target_test.clone(), splits.source.clone(), splits.truth.clone())?;
    let outcome = train(&mut net, &splits.source, &splits.target_train, &cfg.train, &eval)?;
    Ok((net, outcome))
}

/// Runs `cfg.iterations` SGD steps on `net`: sample, forward, loss, backward,
/// update. Deterministic given the configs and seeds.
pub fn train(net: &mut Network, source: &Dataset, target: &Dataset, cfg: &TrainConfig, eval: &Evaluator) -> Result<TrainOutcome> {
    cfg.validate()?;
    let spec = BatchSpec {
        seed: derive_seed(cfg.seed, cfg.batch.seed),
        ..cfg.batch
    };
    let mut sampler = BatchSampler::new(spec, source, target)?;
    let mut metrics = Vec::new();
    let mut last = None;
    for it in 0..cfg.iterations {
        let batch = sampler.sample(source, target)?;
        let rows = ObjectiveRows::from_tags(&batch.tags, &batch.labels)?;
        net.zero_grad();
        // Overflowing activations surface as NonFinite from tensor construction.
        let abort = |e: MdaError| match e {
            MdaError::NonFinite { .. } => MdaError::NumericalAbort {
                iteration: it,
                terms: format!("non-finite activation ({e}); last loss {last:?}"),
            },
            e => e,
        };
        let record = net.forward_train(&batch.features, &batch.tags).map_err(abort)?;
        let (loss, grads) = evaluate(&record.class_probs, &record.domain_probs, &rows, &cfg.loss).map_err(abort)?;
        if !loss.is_finite() {
            return Err(MdaError::NumericalAbort {
                iteration: it,
                terms: format!(
                    "class_ce={} domain_ce={} h_C={} h_D={}",
                    loss.class_ce, loss.domain_ce, loss.h_c, loss.h_d
                ),
            });
        }
        net.backward_train(&record, &grads.class_logits, &grads.domain_logits)
            .map_err(abort)?;
        let lr = lr_at(cfg.schedule, cfg.base_lr, it, cfg.iterations);
        for (group, p) in net.params_mut() {
            if !cfg.frozen.contains(&group) {
                sgd_step(p, lr, cfg.momentum, cfg.weight_decay);
            }
        }
        let done = it + 1;
        if done % cfg.eval_every == 0 || done == cfg.iterations {
            let s = eval.evaluate(net)?;
            metrics.push(MetricsRow {
                iteration: done,
                total: loss.total,
                class_ce: loss.class_ce,
                domain_ce: loss.domain_ce,
                h_c: loss.h_c,
                h_d: loss.h_d,
                acc: s.accuracy,
                nmi: s.nmi,
                purity: s.purity,
                lr,
            });
        }
        last = Some(loss);
    }
    let final_row = metrics.last().expect("at least one row");
    let scores = EvalScores {
        accuracy: final_row.acc,
        nmi: final_row.nmi,
        purity: final_row.purity,
    };
    Ok(TrainOutcome {
        metrics,
        last_loss: last.expect("at least one iteration"),
        scores,
    })
}
