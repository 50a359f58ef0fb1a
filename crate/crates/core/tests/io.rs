mod common;

use std::collections::BTreeMap;

use common::{random_dataset, random_mlp, rng, small_cnn};
use gengap_core::io::{
    decode_dataset, decode_model, encode_dataset, encode_model, fnv1a, load_dataset, load_model, load_zoo_models,
    save_dataset, save_model, ManifestEntry, ZooManifest,
};
use gengap_core::nn::{Dense, Layer, Network, Shape};
use gengap_core::{Error, LabeledDataset};
use serde_json::{json, Value};

/// Splits a container into (magic, header JSON, payload + checksum).
fn split(bytes: &[u8]) -> (Vec<u8>, Value, Vec<u8>) {
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
    (bytes[..8].to_vec(), header, bytes[12 + len..].to_vec())
}

fn join(magic: &[u8], header: &Value, tail: &[u8]) -> Vec<u8> {
    let h = serde_json::to_vec(header).unwrap();
    let mut out = magic.to_vec();
    out.extend_from_slice(&(h.len() as u32).to_le_bytes());
    out.extend_from_slice(&h);
    out.extend_from_slice(tail);
    out
}

fn f32_net(seed: u64, conv: bool) -> Network<f32> {
    let mut r = rng(seed);
    let net = if conv { small_cnn(&mut r) } else { random_mlp(&mut r) };
    net.cast()
}

fn weight_bits(net: &Network<f32>) -> Vec<u32> {
    net.layers()
        .iter()
        .flat_map(|l| match l {
            Layer::Dense(d) => d.weight.iter().chain(&d.bias).map(|v| v.to_bits()).collect(),
            Layer::Conv2d(c) => c.kernel.iter().chain(&c.bias).map(|v| v.to_bits()).collect(),
            _ => Vec::new(),
        })
        .collect()
}

#[test]
fn model_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..20 {
        let net = f32_net(seed, seed % 3 == 0);
        let path = dir.path().join(format!("{seed}.ggm"));
        save_model(&net, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.layers().len(), net.layers().len());
        assert_eq!(back.input_shape(), net.input_shape());
        assert_eq!(back.num_classes(), net.num_classes());
        assert_eq!(weight_bits(&back), weight_bits(&net));
        // Re-encoding the loaded network reproduces the file byte for byte.
        assert_eq!(encode_model(&back).unwrap(), std::fs::read(&path).unwrap());
    }
}

#[test]
fn dataset_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(1);
    let net = small_cnn(&mut r);
    let data: LabeledDataset<f32> = random_dataset(&mut r, &net, 37).cast();
    let path = dir.path().join("d.ggd");
    save_dataset(&data, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.labels(), data.labels());
    assert_eq!(back.input_shape(), data.input_shape());
    for (a, b) in back.inputs().iter().zip(data.inputs()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn any_corrupt_payload_byte_fails_checksum() {
    let bytes = encode_model(&f32_net(3, false)).unwrap();
    let (magic, header, tail) = split(&bytes);
    let payload_len = tail.len() - 8;
    for pos in [0, payload_len / 2, payload_len - 1] {
        let mut t = tail.clone();
        t[pos] ^= 0x40;
        match decode_model(&join(&magic, &header, &t)) {
            Err(Error::ChecksumMismatch { expected, found }) => {
                assert_eq!(expected, fnv1a(&tail[..payload_len]));
                assert_eq!(found, fnv1a(&t[..payload_len]));
            }
            other => panic!("expected checksum mismatch, got {other:?}"),
        }
    }
    let data: LabeledDataset<f32> = LabeledDataset::new(vec![vec![1.0, 2.0]], vec![0], Shape::Vector(2), 2).unwrap();
    let mut bytes = encode_dataset(&data).unwrap();
    let n = bytes.len();
    bytes[n - 9] ^= 1;
    assert!(matches!(decode_dataset(&bytes), Err(Error::ChecksumMismatch { .. })));
}

#[test]
fn overlapping_and_out_of_bounds_offsets_are_rejected() {
    let net = Network::new(
        vec![
            Layer::Dense(Dense::new(vec![1.0f32; 6], vec![0.0; 3], 2, 3)),
            Layer::Relu,
            Layer::Dense(Dense::new(vec![1.0f32; 6], vec![0.0; 2], 3, 2)),
        ],
        Shape::Vector(2),
        2,
    )
    .unwrap();
    let (magic, header, tail) = split(&encode_model(&net).unwrap());

    let mut overlap = header.clone();
    overlap["layers"][2]["weight"]["offset"] = overlap["layers"][0]["weight"]["offset"].clone();
    assert!(matches!(decode_model(&join(&magic, &overlap, &tail)), Err(Error::Format(_))));

    let mut outside = header.clone();
    outside["layers"][2]["bias"]["offset"] = json!(1 << 20);
    assert!(matches!(decode_model(&join(&magic, &outside, &tail)), Err(Error::Format(_))));

    let mut misaligned = header.clone();
    misaligned["layers"][0]["bias"]["offset"] = json!(25);
    assert!(matches!(decode_model(&join(&magic, &misaligned, &tail)), Err(Error::Format(_))));

    let mut short = header;
    short["layers"][0]["weight"]["len"] = json!(5);
    assert!(decode_model(&join(&magic, &short, &tail)).is_err());
}

#[test]
fn version_mismatch_reports_both_versions() {
    let (magic, mut header, tail) = split(&encode_model(&f32_net(4, false)).unwrap());
    header["format_version"] = json!(7);
    match decode_model(&join(&magic, &header, &tail)) {
        Err(Error::VersionMismatch { found, expected }) => assert_eq!((found, expected), (7, 1)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_layer_type_is_named() {
    let (magic, mut header, tail) = split(&encode_model(&f32_net(5, false)).unwrap());
    header["layers"][0]["type"] = json!("softsign");
    match decode_model(&join(&magic, &header, &tail)) {
        Err(Error::UnknownLayerType(t)) => assert_eq!(t, "softsign"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn wrong_magic_and_truncation_are_format_errors() {
    let bytes = encode_model(&f32_net(6, false)).unwrap();
    assert!(matches!(decode_dataset(&bytes), Err(Error::Format(_))));
    assert!(matches!(decode_model(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
    assert!(matches!(decode_model(&bytes[..10]), Err(Error::Format(_))));
}

#[test]
fn invalid_datasets_are_rejected() {
    let data: LabeledDataset<f32> =
        LabeledDataset::new(vec![vec![0.5, 1.5], vec![2.0, 3.0]], vec![0, 1], Shape::Vector(2), 2).unwrap();
    let (magic, header, mut tail) = split(&encode_dataset(&data).unwrap());
    // Label 1 → 5, then fix the checksum so validation is what fails.
    let lab = header["labels"]["offset"].as_u64().unwrap() as usize + 4;
    tail[lab..lab + 4].copy_from_slice(&5u32.to_le_bytes());
    let n = tail.len() - 8;
    let sum = fnv1a(&tail[..n]);
    tail[n..].copy_from_slice(&sum.to_le_bytes());
    assert!(matches!(
        decode_dataset(&join(&magic, &header, &tail)),
        Err(Error::InvalidLabel { label: 5, num_classes: 2 })
    ));

    assert!(LabeledDataset::<f32>::new(vec![], vec![], Shape::Vector(2), 2).is_err());
    let mut empty = header;
    empty["num_examples"] = json!(0);
    assert!(decode_dataset(&join(&magic, &empty, &tail)).is_err());
}

#[test]
fn manifest_round_trip_and_validation() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(9);
    let net = random_mlp(&mut r);
    let data = random_dataset(&mut r, &net, 10);
    std::fs::create_dir_all(dir.path().join("m")).unwrap();
    save_model(&net, dir.path().join("m/a.ggm")).unwrap();
    save_model(&net, dir.path().join("m/b.ggm")).unwrap();
    save_dataset(&data, dir.path().join("train.ggd")).unwrap();
    let entry = |id: &str, depth: Value| ManifestEntry {
        model_id: id.into(),
        model: format!("m/{id}.ggm").into(),
        dataset: "train.ggd".into(),
        hyperparams: BTreeMap::from([("depth".to_string(), depth), ("opt".to_string(), json!("sgd"))]),
        train_error: 0.1,
        test_error: 0.3,
        measure_values: BTreeMap::from([("x".to_string(), 1.5)]),
    };
    let manifest = ZooManifest::new(json!({"name": "t"}), vec![entry("a", json!(2)), entry("b", json!(true))], dir.path());
    let path = dir.path().join("manifest.json");
    manifest.save(&path).unwrap();
    let back = ZooManifest::load(&path).unwrap();
    assert_eq!(back, manifest);
    let loaded = load_zoo_models(&back).unwrap();
    assert_eq!(loaded.len(), 2);
    assert_eq!(loaded[0].0.hyperparams["depth"], "2");
    assert_eq!(loaded[1].0.hyperparams["depth"], "true");
    assert!(std::sync::Arc::ptr_eq(&loaded[0].2, &loaded[1].2));

    let text = std::fs::read_to_string(&path).unwrap();
    let floats = text.replacen("\"depth\": 2", "\"depth\": 2.5", 1);
    assert!(matches!(ZooManifest::from_json(&floats, dir.path()), Err(Error::NonDiscreteHyperparam { .. })));
    let uneven = text.replacen("\"opt\": \"sgd\"", "\"optimizer\": \"sgd\"", 1);
    assert!(matches!(ZooManifest::from_json(&uneven, dir.path()), Err(Error::InconsistentHyperparams(_))));

    // A corrupted model file is caught at manifest load.
    let model_path = dir.path().join("m/b.ggm");
    let mut bytes = std::fs::read(&model_path).unwrap();
    let n = bytes.len();
    bytes[n - 12] ^= 0xff;
    std::fs::write(&model_path, bytes).unwrap();
    assert!(matches!(ZooManifest::load(&path), Err(Error::ChecksumMismatch { .. })));
}
