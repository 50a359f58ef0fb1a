use std::collections::BTreeSet;

use gengap_core::io::{load_zoo_models, write_zoo, ZooManifest};
use gengap_core::nn::predict;
use gengap_core::scalar::argmax;
use gengap_core::zoo::{
    build_plan, build_zoo, error_rate, generate_task, generate_task_with_clean_labels, train_model, SyntheticTaskSpec,
    TaskGenerator, TrainConfig, ZooPlan,
};
use gengap_core::{generalization_gap, Error};

fn blobs(seed: u64) -> SyntheticTaskSpec {
    SyntheticTaskSpec {
        generator: TaskGenerator::GaussianBlobs,
        input_dim: 4,
        num_classes: 2,
        n_train: 200,
        n_test: 1000,
        label_noise_fraction: 0.0,
        seed,
        class_separation: 3.0,
    }
}

#[test]
fn symmetric_blobs_are_linearly_separable() {
    let (train, test) = generate_task(&blobs(1)).unwrap();
    // Bayes-optimal rule for means ±(3, …, 3): class 0 iff Σ x_k > 0.
    let bayes = |x: &[f32]| usize::from(x.iter().map(|&v| f64::from(v)).sum::<f64>() <= 0.0);
    let acc = test.iter().filter(|(x, y)| bayes(x) == *y).count() as f64 / test.len() as f64;
    assert!(acc >= 0.99, "Bayes accuracy {acc}");

    let cfg = TrainConfig { depth: 1, epochs: 100, learning_rate: 0.1, ..Default::default() };
    let trained = train_model(&train, &test, &cfg).unwrap();
    assert!(trained.train_error <= 0.01);
    assert!(trained.test_error <= 0.01, "test error {}", trained.test_error);
    assert!(trained.reached_target);
}

#[test]
fn tasks_are_deterministic_and_noise_hits_train_only() {
    for generator in [TaskGenerator::GaussianBlobs, TaskGenerator::TwoSpirals, TaskGenerator::RandomLabelFraction] {
        let spec = SyntheticTaskSpec { generator, label_noise_fraction: 0.3, ..blobs(5) };
        let ((a_tr, a_te), clean) = generate_task_with_clean_labels(&spec).unwrap();
        let (b_tr, b_te) = generate_task(&spec).unwrap();
        assert_eq!(a_tr.labels(), b_tr.labels());
        assert_eq!(a_te.labels(), b_te.labels());
        for (x, y) in a_tr.inputs().iter().zip(b_tr.inputs()) {
            assert!(x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
        let flipped = a_tr.labels().iter().zip(&clean).filter(|(a, b)| a != b).count();
        assert_eq!(flipped, 60);

        let clean_spec = SyntheticTaskSpec { label_noise_fraction: 0.0, ..spec };
        let ((c_tr, c_te), c_clean) = generate_task_with_clean_labels(&clean_spec).unwrap();
        assert_eq!(c_tr.labels(), &c_clean[..]);
        assert_eq!(c_clean, clean);
        assert_eq!(c_te.labels(), a_te.labels());
    }
}

#[test]
fn training_is_deterministic() {
    let (train, test) = generate_task(&SyntheticTaskSpec { label_noise_fraction: 0.2, ..blobs(2) }).unwrap();
    let cfg = TrainConfig { depth: 3, width: 16, epochs: 30, seed: 9, ..Default::default() };
    let a = train_model(&train, &test, &cfg).unwrap();
    let b = train_model(&train, &test, &cfg).unwrap();
    assert_eq!(a, b);
    let other = train_model(&train, &test, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.network, other.network);
}

#[test]
fn noisy_labels_open_a_gap() {
    let spec = SyntheticTaskSpec { label_noise_fraction: 0.5, n_train: 100, ..blobs(3) };
    let (train, test) = generate_task(&spec).unwrap();
    let cfg = TrainConfig { depth: 3, width: 64, epochs: 1500, learning_rate: 0.1, ..Default::default() };
    let t = train_model(&train, &test, &cfg).unwrap();
    assert!(t.test_error - t.train_error > 0.1, "train {} test {}", t.train_error, t.test_error);
    assert_eq!(error_rate(&t.network, &test).unwrap(), t.test_error);
    let manual = test.iter().filter(|(x, y)| argmax(&predict(&t.network, x).unwrap()) != *y).count();
    assert_eq!(manual as f64 / test.len() as f64, t.test_error);
}

#[test]
fn sweep_tags_are_distinct() {
    let mut sweep = Vec::new();
    for depth in [1, 2, 3] {
        for width in [8, 32] {
            sweep.push(TrainConfig { depth, width, epochs: 5, ..Default::default() });
        }
    }
    let zoo = build_zoo(&blobs(4), &sweep).unwrap();
    assert_eq!(zoo.len(), 6);
    let tags: BTreeSet<_> = zoo.iter().map(|m| m.entry.hyperparams.clone()).collect();
    assert_eq!(tags.len(), 6);
    let keys: BTreeSet<_> = zoo[0].entry.hyperparams.keys().cloned().collect();
    assert_eq!(keys, ["depth", "label_noise", "learning_rate", "width"].iter().map(|s| s.to_string()).collect());
    assert!(zoo.iter().all(|m| m.entry.measure_values.is_empty()));
    assert!(matches!(build_zoo(&blobs(4), &sweep[..1]), Err(Error::InvalidConfig(_))));
}

#[test]
fn mean_gap_increases_with_label_noise() {
    let mut plan = ZooPlan::default_with_seed(17);
    plan.depths = vec![2, 3];
    plan.widths = vec![32];
    let models = build_plan(&plan).unwrap();
    let mean_gap = |noise: &str| {
        let gaps: Vec<f64> = models
            .iter()
            .filter(|m| m.entry.hyperparams["label_noise"] == noise)
            .map(|m| generalization_gap(&m.entry))
            .collect();
        assert_eq!(gaps.len(), 6);
        gaps.iter().sum::<f64>() / gaps.len() as f64
    };
    let (g0, g1, g2) = (mean_gap("0"), mean_gap("0.25"), mean_gap("0.5"));
    assert!(g0 < g1 && g1 < g2, "{g0} {g1} {g2}");
}

#[test]
fn zoo_survives_manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sweep: Vec<TrainConfig> =
        [1, 2].iter().map(|&depth| TrainConfig { depth, width: 8, epochs: 5, ..Default::default() }).collect();
    let zoo = build_zoo(&blobs(6), &sweep).unwrap();
    write_zoo(dir.path(), serde_json::json!({"seed": 6}), &zoo).unwrap();
    let manifest = ZooManifest::load(dir.path().join("manifest.json")).unwrap();
    let loaded = load_zoo_models(&manifest).unwrap();
    assert_eq!(loaded.len(), zoo.len());
    for ((entry, net, data), m) in loaded.iter().zip(&zoo) {
        assert_eq!(entry, &m.entry);
        assert_eq!(net, &m.network);
        assert_eq!(data.labels(), m.train_data.labels());
    }
    // Both models share one training file.
    assert_eq!(std::fs::read_dir(dir.path().join("data")).unwrap().count(), 1);
}
