use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use uavxai::attack::AttackConfig;
use uavxai::detectors::{evaluate, train_detector, Dataset, Detector, DetectorConfig, DetectorKind, SampleRef};
use uavxai::seed::SeedTree;
use uavxai::Exec;

/// Clean/attacked pairs where the attacked payload has a few features
/// shifted by `shift` standard deviations.
fn paired(n: usize, dims: &[usize], shift: f32, seed: u64) -> (Dataset, Vec<SampleRef>) {
    let len: usize = dims.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0f32, 1.0).unwrap();
    let mut data = Dataset {
        kind: DetectorKind::Fcn,
        dims: dims.to_vec(),
        payloads: Vec::new(),
        labels: Vec::new(),
        deflections: Vec::new(),
        model_hash: "m".into(),
        background_hash: "b".into(),
        attack: AttackConfig::default(),
    };
    let mut refs = Vec::new();
    for i in 0..n {
        let clean: Vec<f32> = (0..len).map(|_| noise.sample(&mut rng) * 0.01).collect();
        let mut attacked: Vec<f32> = (0..len).map(|_| noise.sample(&mut rng) * 0.01).collect();
        for v in attacked.iter_mut().take(4) {
            *v += shift * 0.01;
        }
        data.push(&clean, 0, 0.0);
        data.push(&attacked, 1, rng.random_range(1.0..40.0));
        refs.push(SampleRef { seed: i as u64, step: 0 });
    }
    (data, refs)
}

fn config() -> DetectorConfig {
    let mut cfg = DetectorConfig::default();
    cfg.fcn.epochs = 15;
    cfg
}

#[test]
fn fcn_learns_a_separable_shift() {
    let (data, _) = paired(300, &[24], 3.0, 1);
    let (det, curves) = train_detector(&data, &config(), &SeedTree::new(2), Exec::Sequential).unwrap();
    assert!(curves.test_accuracy > 0.9, "test accuracy {}", curves.test_accuracy);
    assert!(curves.best_epoch >= 1 && curves.best_epoch <= 15);

    let (held_out, refs) = paired(200, &[24], 3.0, 99);
    let report = evaluate(&det, &held_out, &refs, Exec::Sequential).unwrap();
    assert!(report.accuracy > 0.9, "held-out accuracy {}", report.accuracy);
    assert_eq!(report.samples, 400);
    assert_eq!(report.scores[1].seed, 0);
    assert_eq!(report.scores[3].seed, 1);
}

#[test]
fn shuffled_labels_fall_far_short_of_true_labels() {
    let (data, _) = paired(300, &[24], 3.0, 1);
    let shuffled = data.with_shuffled_labels(&mut ChaCha8Rng::seed_from_u64(4));
    assert_eq!(shuffled.attacked(), data.attacked());
    assert_eq!(shuffled.payloads, data.payloads);
    let (det, _) = train_detector(&shuffled, &config(), &SeedTree::new(2), Exec::Sequential).unwrap();
    let (held_out, refs) = paired(500, &[24], 3.0, 77);
    let acc = evaluate(&det, &held_out, &refs, Exec::Sequential).unwrap().accuracy;
    // the permuted labels still carry a small chance correlation with the
    // shift, so the control can land on either side of 0.5
    assert!(acc < 0.7, "shuffled accuracy {acc}");
}

#[test]
fn training_is_seed_deterministic_and_exec_independent() {
    let (data, _) = paired(60, &[12], 3.0, 5);
    let mut cfg = config();
    cfg.fcn.epochs = 3;
    let (a, ca) = train_detector(&data, &cfg, &SeedTree::new(7), Exec::Sequential).unwrap();
    let (b, cb) = train_detector(&data, &cfg, &SeedTree::new(7), Exec::Parallel).unwrap();
    assert_eq!(a.weight_bytes(), b.weight_bytes());
    assert_eq!(ca, cb);
}

#[test]
fn single_label_sets_are_rejected() {
    let (mut data, _) = paired(10, &[6], 3.0, 5);
    data.labels.iter_mut().for_each(|l| *l = 0);
    assert!(train_detector(&data, &config(), &SeedTree::new(0), Exec::Sequential).is_err());
}

#[test]
fn evaluation_checks_shapes_and_pairing() {
    let (data, refs) = paired(10, &[6], 3.0, 5);
    let det = Detector::new(DetectorKind::Fcn, &[6], &config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(evaluate(&det, &data, &refs[..9], Exec::Sequential).is_err());
    let wide = Detector::new(DetectorKind::Fcn, &[7], &config(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(evaluate(&wide, &data, &refs, Exec::Sequential).is_err());
}

#[test]
fn stored_datasets_detect_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = paired(8, &[5], 3.0, 5);
    let manifest = data.save(dir.path()).unwrap();
    assert_eq!(Dataset::load(&manifest).unwrap(), data);

    let mut other = data.clone();
    other.payloads[3] += 1.0;
    let records = dir.path().join("fcn.records");
    let saved = std::fs::read_to_string(&manifest).unwrap();
    other.save(dir.path()).unwrap();
    std::fs::write(&manifest, saved).unwrap();
    assert!(records.exists());
    let err = Dataset::load(&manifest).unwrap_err().to_string();
    assert!(err.contains("payload hash mismatch"), "{err}");
}

#[test]
fn saved_detectors_score_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config();
    for (kind, dims) in [(DetectorKind::Fcn, vec![9]), (DetectorKind::Lstm, vec![4, 6])] {
        let mut det = Detector::new(kind, &dims, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        det.set_scale(3.5);
        det.save(dir.path(), kind.name(), serde_json::Value::Null).unwrap();
        let back = Detector::load(&dir.path().join(format!("{kind}.uavw"))).unwrap();
        let x: Vec<f32> = (0..dims.iter().product::<usize>()).map(|i| (i as f32).sin()).collect();
        assert_eq!(back.score(&x).unwrap(), det.score(&x).unwrap());
        assert_eq!(back.scale(), 3.5);
    }
}
