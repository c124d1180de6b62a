use std::fs;

use tattooed::{keyfile, model_io, record};
use tattooed_core::model::{synth_model, REFERENCE_LAYERS};
use tattooed_core::watermark::{mark, WatermarkPayload};
use tattooed_core::{SecretKey, Seed, TensorContainer};

#[test]
fn tnsr_save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let c = TensorContainer::from_tensors([
        ("embed", vec![3, 5], (0..15).map(|i| i as f32 * 0.5).collect()),
        ("norm", vec![5], vec![1.0; 5]),
        ("head", vec![2, 5], (0..10).map(|i| -(i as f32)).collect()),
    ])
    .unwrap();
    let a = dir.path().join("a.tnsr");
    let b = dir.path().join("b.tnsr");
    model_io::save(&c, &a).unwrap();
    let loaded = model_io::load(&a).unwrap();
    assert_eq!(loaded, c);
    model_io::save(&loaded, &b).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn reference_model_has_198656_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ref.tnsr");
    model_io::save(&synth_model(&REFERENCE_LAYERS, &Seed::from_u64(0)).unwrap(), &path).unwrap();
    let c = model_io::load(&path).unwrap();
    assert_eq!(c.flatten().len(), 198_656);
    assert_eq!(c.manifest().tensors.len(), 8);
}

#[test]
fn flatten_order_follows_manifest() {
    let c = TensorContainer::from_tensors([
        ("A", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]),
        ("B", vec![3], vec![5.0, 6.0, 7.0]),
    ])
    .unwrap();
    let bytes = model_io::encode(&c);
    let flat = model_io::decode(&bytes).unwrap().flatten();
    assert_eq!(flat.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
}

#[test]
fn truncated_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.tnsr");
    let bytes = model_io::encode(&synth_model(&[4, 3], &Seed::from_u64(1)).unwrap());
    fs::write(&path, &bytes[..bytes.len() - 2]).unwrap();
    let err = model_io::load(&path).unwrap_err();
    assert_eq!(err.class(), "format");
}

#[test]
fn record_round_trip_and_no_key_material() {
    let dir = tempfile::tempdir().unwrap();
    let key = SecretKey::from([0xabu8; 64]);
    let w = synth_model(&[784, 12, 10], &Seed::from_u64(2)).unwrap().flatten();
    let payload = WatermarkPayload::new(b"hi".to_vec()).unwrap();
    let (_, rec) = mark(&w, &key, &payload, 0.09, 1.0).unwrap();
    let path = dir.path().join("r.wmrec");
    record::save(&rec, &path).unwrap();
    assert_eq!(record::load(&path).unwrap(), rec);
    let text = fs::read_to_string(&path).unwrap();
    assert!(!text.contains(&hex::encode(key.as_bytes())));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["payload"], "6869");
    assert_eq!(v["total_bits"], 232);
    assert_eq!(v["key_id"].as_str().unwrap().len(), 64);
}

#[test]
fn key_file_round_trip_and_no_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("k.key");
    let key = keyfile::generate().unwrap();
    keyfile::save(&key, &path).unwrap();
    assert_eq!(keyfile::load(&path).unwrap().as_bytes(), key.as_bytes());
    assert_eq!(keyfile::save(&key, &path).unwrap_err().class(), "io");
    fs::write(&path, key.as_bytes()).unwrap();
    assert_eq!(keyfile::load(&path).unwrap().as_bytes(), key.as_bytes());
}
