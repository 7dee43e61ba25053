use std::path::Path;

use mda_core::config::ExperimentConfig;
use mda_core::data::{DataConfig, SynthConfig};
use mda_core::network::Normalization;
use mda_core::objective::LossWeights;
use mda_core::train::experiments::{run_baseline_grid, run_grid, run_variant, Variant};
use mda_core::train::{train_experiment, write_metrics_csv};
use mda_core::MdaError;

fn load(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name), &[]).unwrap()
}

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.model.trunk_widths = vec![16];
    cfg.model.classifier_widths = vec![16];
    cfg.model.branch_width = 16;
    cfg.model.classes = 4;
    cfg.train.iterations = 60;
    cfg.train.eval_every = 20;
    cfg.train.batch.source_quota = 32;
    cfg.train.batch.target_quota = 32;
    cfg.data = DataConfig::Synthetic(SynthConfig {
        samples_per_domain: 120,
        target_train: 100,
        target_test: 100,
        ..SynthConfig::default()
    });
    cfg
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let (_, out) = train_experiment(cfg).unwrap();
    let mut buf = Vec::new();
    write_metrics_csv(&mut buf, &out.metrics).unwrap();
    buf
}

#[test]
fn supervised_training_reduces_the_loss() {
    let mut cfg = small();
    cfg.model.normalization = Normalization::Pooled;
    cfg.model.k = 1;
    cfg.train.loss = LossWeights::SUPERVISED;
    cfg.train.iterations = 200;
    cfg.train.eval_every = 10;
    let (_, out) = train_experiment(&cfg).unwrap();
    let early: f64 = out.metrics[..3].iter().map(|r| r.total).sum::<f64>() / 3.0;
    let late: f64 = out.metrics[out.metrics.len() - 3..].iter().map(|r| r.total).sum::<f64>() / 3.0;
    assert!(late < 0.7 * early, "loss went from {early} to {late}");
    assert!(out.metrics.iter().all(|r| r.h_c == 0.0 || r.class_ce >= 0.0));
}

#[test]
fn identical_seeds_give_identical_metrics() {
    let cfg = small();
    let a = csv_bytes(&cfg);
    assert_eq!(a, csv_bytes(&cfg));
    assert_ne!(a, csv_bytes(&cfg.clone().with_seed(1)));
    let header = String::from_utf8(a).unwrap();
    assert!(header.starts_with("iteration,total,class_ce,domain_ce,h_C,h_D,acc,nmi,purity,lr\n"));
}

#[test]
fn metrics_rows_follow_the_eval_cadence() {
    let mut cfg = small();
    cfg.train.iterations = 50;
    let (_, out) = train_experiment(&cfg).unwrap();
    let its: Vec<usize> = out.metrics.iter().map(|r| r.iteration).collect();
    assert_eq!(its, vec![20, 40, 50]);
    for r in &out.metrics {
        assert!((0.0..=1.0).contains(&r.acc) && (0.0..=1.0).contains(&r.purity));
        assert!((-1e-12..=1.0 + 1e-12).contains(&r.nmi));
    }
}

#[test]
fn divergence_aborts_with_a_diagnostic() {
    let mut cfg = small();
    cfg.train.base_lr = 1e12;
    match train_experiment(&cfg) {
        Err(MdaError::NumericalAbort { iteration, terms }) => {
            assert!(iteration < cfg.train.iterations);
            assert!(!terms.is_empty());
        }
        other => panic!("expected a numerical abort, got {:?}", other.map(|r| r.1.last_loss)),
    }
}

#[test]
fn label_fraction_limits_match_their_reference_runs() {
    let cfg = small();
    let splits = cfg.data.load(None).unwrap();
    let run = |v| run_variant(&cfg, &splits, v, 4).unwrap().1.metrics;
    assert_eq!(run(Variant::Revealed { fraction: 1.0 }), run(Variant::KnownDomains));
    assert_eq!(run(Variant::Revealed { fraction: 0.0 }), run(Variant::Discovery { k: 2 }));
}

#[test]
fn adding_seeds_keeps_existing_rows() {
    let cfg = small();
    let v = [Variant::Unified];
    let two = run_grid(&cfg, &v, &[0, 1]).unwrap();
    let three = run_grid(&cfg, &v, &[0, 1, 2]).unwrap();
    assert_eq!(two.runs[..], three.runs[..2]);
    assert!(run_grid(&cfg, &[], &[0]).is_err());
}

#[test]
fn baseline_grid_has_four_groups_on_shared_data() {
    let table = run_baseline_grid(&small(), &[0]).unwrap();
    let labels: Vec<&str> = table.groups.iter().map(|g| g.label.as_str()).collect();
    assert_eq!(labels, ["source_only", "unified", "discovery_k2", "known_domains"]);
    assert_eq!(table.runs.len(), 4);
}

#[test]
fn no_shift_control_discovery_matches_unified() {
    let cfg = load("no_shift.json");
    let table = run_grid(
        &cfg,
        &[Variant::Unified, Variant::Discovery { k: 2 }, Variant::KnownDomains],
        &[0, 1, 2, 3, 4],
    )
    .unwrap();
    let med = |l: &str| table.group(l).unwrap().median_accuracy;
    let (u, d, kn) = (med("unified"), med("discovery_k2"), med("known_domains"));
    assert!((d - u).abs() <= 0.02, "unified {u} discovery {d}");
    assert!((kn - u).abs() <= 0.02 && (kn - d).abs() <= 0.02, "known {kn}");
}
