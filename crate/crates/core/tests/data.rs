use mda_core::assignment::DomainTag;
use mda_core::config::ExperimentConfig;
use mda_core::data::idx::{parse_images, parse_labels};
use mda_core::data::*;
use mda_core::tensor::{rng_normal, Tensor};
use mda_core::MdaError;

fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for d in dims {
        out.extend(d.to_be_bytes());
    }
    out
}

fn fixture_images() -> Vec<u8> {
    let mut bytes = header(0x0803, &[2, 2, 2]);
    bytes.extend(0u8..8);
    bytes
}

fn fixture_labels(n: u32) -> Vec<u8> {
    let mut bytes = header(0x0801, &[n]);
    bytes.extend((0..n).map(|i| i as u8));
    bytes
}

#[test]
fn idx_hand_fixture_parses_exactly() {
    let x = parse_images(&fixture_images()).unwrap();
    assert_eq!(x.shape(), &[2, 1, 2, 2]);
    let expect: Vec<f64> = (0..8).map(|b| b as f64 / 255.0).collect();
    assert_eq!(x.data(), expect.as_slice());
    assert_eq!(parse_labels(&fixture_labels(2)).unwrap(), vec![0, 1]);
}

#[test]
fn idx_errors_are_distinct() {
    let mut bad = fixture_images();
    bad[3] = 0x01;
    assert!(matches!(
        parse_images(&bad),
        Err(MdaError::BadMagic {
            expected: 0x803,
            found: 0x801
        })
    ));
    assert!(matches!(parse_labels(&fixture_images()), Err(MdaError::BadMagic { .. })));

    assert!(matches!(parse_images(&[]), Err(MdaError::Truncated { found: 0, .. })));
    let short = &fixture_images()[..fixture_images().len() - 1];
    assert!(matches!(parse_images(short), Err(MdaError::Truncated { needed: 24, found: 23 })));
    assert!(matches!(parse_labels(&fixture_labels(3)[..9]), Err(MdaError::Truncated { .. })));

    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
    std::fs::write(&img, fixture_images()).unwrap();
    std::fs::write(&lab, fixture_labels(3)).unwrap();
    assert!(matches!(
        idx_load(&img, &lab),
        Err(MdaError::CountMismatch { images: 2, labels: 3 })
    ));
    assert!(matches!(idx_load(&dir.path().join("missing"), &lab), Err(MdaError::Io { .. })));
}

#[test]
fn idx_write_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("i"), dir.path().join("l"));
    let x = parse_images(&fixture_images()).unwrap();
    idx_write(&img, &lab, &x, &[5, 9]).unwrap();
    assert_eq!(std::fs::read(&img).unwrap(), fixture_images());
    let (back, labels) = idx_load(&img, &lab).unwrap();
    assert_eq!(back, x);
    assert_eq!(labels, vec![5, 9]);
}

#[test]
fn image_transforms_are_identities_when_composed() {
    let x = rng_normal(3, &[3, 2, 3, 4], 1.0).unwrap();
    let twice = domain_transform(&domain_transform(&x, &ImageTransform::Invert).unwrap(), &ImageTransform::Invert).unwrap();
    assert!(twice.max_abs_diff(&x) <= 1e-15);

    let quiet = domain_transform(&x, &ImageTransform::Noise { sigma: 0.0, seed: 4 }).unwrap();
    assert_eq!(quiet, x);

    let mut r = x.clone();
    for _ in 0..4 {
        r = domain_transform(&r, &ImageTransform::Rot90 { quarters: 1 }).unwrap();
    }
    assert_eq!(r, x);
    let once = domain_transform(&x, &ImageTransform::Rot90 { quarters: 1 }).unwrap();
    assert_eq!(once.shape(), &[3, 2, 4, 3]);
}

#[test]
fn rot90_moves_corners_counter_clockwise() {
    // [[1,2],[3,4]] rotated a quarter turn counter-clockwise is [[2,4],[1,3]].
    let x = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let y = domain_transform(&x, &ImageTransform::Rot90 { quarters: 1 }).unwrap();
    assert_eq!(y.data(), &[2.0, 4.0, 1.0, 3.0]);
}

fn small_sets() -> (Dataset, Dataset) {
    let src = Dataset::new(
        rng_normal(1, &[10, 3], 1.0).unwrap(),
        (0..10).map(|i| Some(i % 2)).collect(),
        vec![DomainTag::UnknownSource; 10],
    )
    .unwrap();
    let tgt = Dataset::new(rng_normal(2, &[6, 3], 1.0).unwrap(), vec![None; 6], vec![DomainTag::Target; 6]).unwrap();
    (src, tgt)
}

fn spec(s: usize, t: usize) -> BatchSpec {
    BatchSpec {
        source_quota: s,
        target_quota: t,
        seed: 5,
        replacement: false,
    }
}

#[test]
fn sampler_quota_arithmetic_and_tags() {
    let (src, tgt) = small_sets();
    let mut sampler = BatchSampler::new(spec(4, 4), &src, &tgt).unwrap();
    let b = sampler.sample(&src, &tgt).unwrap();
    assert_eq!(b.len(), 8);
    assert!(b.tags[..4].iter().all(|t| t.is_source()));
    assert!(b.tags[4..].iter().all(|t| *t == DomainTag::Target));
    assert!(b.labels[4..].iter().all(Option::is_none));
    for (row, &i) in b.source_indices.iter().enumerate() {
        assert_eq!(b.features.row(row), src.features().row(i));
        assert_eq!(b.labels[row], src.labels()[i]);
    }
}

#[test]
fn sampler_is_deterministic_and_keeps_the_quota_ratio() {
    let (src, tgt) = small_sets();
    let mut a = BatchSampler::new(spec(3, 2), &src, &tgt).unwrap();
    let mut b = BatchSampler::new(spec(3, 2), &src, &tgt).unwrap();
    let (mut n_src, mut n_tgt) = (0, 0);
    for _ in 0..1000 {
        let (x, y) = (a.sample(&src, &tgt).unwrap(), b.sample(&src, &tgt).unwrap());
        assert_eq!(x, y);
        n_src += x.tags.iter().filter(|t| t.is_source()).count();
        n_tgt += x.tags.iter().filter(|t| **t == DomainTag::Target).count();
    }
    assert_eq!((n_src, n_tgt), (3000, 2000));
}

#[test]
fn sampler_rejects_oversized_quota_without_replacement() {
    let (src, tgt) = small_sets();
    assert!(matches!(
        BatchSampler::new(spec(11, 2), &src, &tgt),
        Err(MdaError::QuotaExceedsDataset { quota: 11, available: 10 })
    ));
    let with = BatchSpec {
        replacement: true,
        ..spec(11, 2)
    };
    assert_eq!(BatchSampler::new(with, &src, &tgt).unwrap().sample(&src, &tgt).unwrap().len(), 13);
}

/// Class-mean classifier: fit on one labeled set, score on another.
fn nearest_centroid(train: &Dataset, test: &Dataset, classes: usize) -> f64 {
    let d = train.features().row_len();
    let mut sums = vec![vec![0.0; d]; classes];
    let mut counts = vec![0usize; classes];
    for (row, y) in train.features().rows().zip(train.labels()) {
        let y = y.unwrap();
        counts[y] += 1;
        for (s, v) in sums[y].iter_mut().zip(row) {
            *s += v;
        }
    }
    let centroids: Vec<Vec<f64>> = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| s.iter().map(|v| v / n as f64).collect())
        .collect();
    let correct = test
        .features()
        .rows()
        .zip(test.labels())
        .filter(|(row, y)| {
            let dist = |c: &Vec<f64>| c.iter().zip(row.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let best = (0..classes)
                .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                .unwrap();
            Some(best) == **y
        })
        .count();
    correct as f64 / test.len() as f64
}

fn benchmark() -> ExperimentConfig {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.json");
    ExperimentConfig::load(&path, &[]).unwrap()
}

#[test]
fn pinned_benchmark_is_solvable_yet_shifted() {
    let cfg = benchmark();
    let DataConfig::Synthetic(synth) = &cfg.data else {
        panic!("synthetic benchmark expected")
    };
    let splits = synth_make(synth).unwrap();
    let test = &splits.target_test;
    let half: Vec<usize> = (0..test.len() / 2).collect();
    let rest: Vec<usize> = (test.len() / 2..test.len()).collect();
    let in_domain = nearest_centroid(&test.select(&half), &test.select(&rest), synth.classes);
    // Each latent source is displaced; pooled centroids would cancel the
    // opposite translations, so transfer is measured per source domain.
    let best_transfer = (0..splits.truth.count())
        .map(|d| {
            let idx: Vec<usize> = (0..splits.source.len()).filter(|&i| splits.truth.domains()[i] == d).collect();
            nearest_centroid(&splits.source.select(&idx), test, synth.classes)
        })
        .fold(0.0, f64::max);
    assert!(in_domain >= 0.9, "target is not separable: {in_domain}");
    assert!(
        in_domain - best_transfer >= 0.1,
        "no shift: in-domain {in_domain}, transfer {best_transfer}"
    );
}

#[test]
fn rotation_interpolation_fixture_is_solvable() {
    let rot = |deg: f64| DomainTransform {
        rotation_deg: deg,
        ..DomainTransform::default()
    };
    let cfg = SynthConfig {
        source_domains: vec![rot(45.0), rot(-45.0)],
        target: rot(0.0),
        ..SynthConfig::default()
    };
    let s = synth_make(&cfg).unwrap();
    let pure = |d: usize| {
        let idx: Vec<usize> = (0..s.source.len()).filter(|&i| s.truth.domains()[i] == d).collect();
        s.source.select(&idx)
    };
    let own = nearest_centroid(&s.target_test, &s.target_test, cfg.classes);
    let from_one = nearest_centroid(&pure(0), &s.target_test, cfg.classes);
    let from_other = nearest_centroid(&pure(1), &s.target_test, cfg.classes);
    assert!(own >= 0.9, "{own}");
    // Symmetric task: neither source is systematically closer to the target.
    assert!((from_one - from_other).abs() <= 0.1, "{from_one} vs {from_other}");
    assert!(from_one < own);
}

#[test]
fn generator_is_a_pure_function_of_its_config() {
    let cfg = SynthConfig {
        samples_per_domain: 50,
        target_train: 20,
        target_test: 20,
        patch: Some([2, 2, 2]),
        ..SynthConfig::default()
    };
    let (a, b) = (synth_make(&cfg).unwrap(), synth_make(&cfg).unwrap());
    assert_eq!(a, b);
    assert_eq!(a.source.sample_shape(), &[2, 2, 2]);
    let other = synth_make(&SynthConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(a.source, other.source);
    assert_eq!(a.truth.count(), 2);
    assert!(a.target_train.labels().iter().all(Option::is_none));
}

#[test]
fn idx_manifest_builds_pseudo_domains() {
    let dir = tempfile::tempdir().unwrap();
    let x = Tensor::new(vec![6, 1, 2, 2], (0..24).map(|v| f64::from(v) / 255.0).collect()).unwrap();
    idx_write(&dir.path().join("img"), &dir.path().join("lab"), &x, &[0, 1, 0, 1, 0, 1]).unwrap();
    let entry = |transforms: Vec<ImageTransform>, known_domain: bool| ManifestEntry {
        images: "img".into(),
        labels: "lab".into(),
        transforms,
        limit: Some(4),
        known_domain,
    };
    let manifest = DataManifest {
        sources: vec![entry(vec![], false), entry(vec![ImageTransform::Invert], true)],
        target: entry(vec![ImageTransform::Rot90 { quarters: 1 }], false),
        target_test: entry(vec![ImageTransform::Rot90 { quarters: 1 }], false),
    };
    let s = manifest.load(Some(dir.path())).unwrap();
    assert_eq!(s.source.len(), 8);
    assert_eq!(s.truth.domains(), &[0, 0, 0, 0, 1, 1, 1, 1]);
    assert_eq!(s.source.tags()[0], DomainTag::UnknownSource);
    assert_eq!(s.source.tags()[4], DomainTag::KnownSource(1));
    assert!((s.source.features().row(4)[0] - 1.0).abs() < 1e-15);
    assert!(s.target_train.labels().iter().all(Option::is_none));
    assert_eq!(s.target_test.dense_labels().unwrap(), vec![0, 1, 0, 1]);
}
