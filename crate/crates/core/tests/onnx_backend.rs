#![cfg(feature = "onnx")]

use std::path::PathBuf;

use image::{Rgb, RgbImage};
use oscface_core::backend::{Backend, OnnxBackend, OnnxConfig};
use oscface_core::Error;
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    shape: [usize; 3],
    channel_sums: Vec<f64>,
    cell_0_5_7: f64,
    prob: [f64; 2],
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn config() -> OnnxConfig {
    let mut cfg = OnnxConfig::new(fixtures().join("tiny.onnx"), "image", "conv5", "prob");
    cfg.mean = [0.0; 3];
    cfg.std = [1.0; 3];
    cfg
}

fn probe() -> RgbImage {
    RgbImage::from_fn(227, 227, |x, y| {
        Rgb([((x * 7 + y * 3) % 256) as u8, ((x * y) % 256) as u8, ((255 - x as i64).rem_euclid(256)) as u8])
    })
}

fn expected() -> Expected {
    let text = std::fs::read_to_string(fixtures().join("tiny_expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn features_match_numpy_reference() {
    let b = OnnxBackend::load(config()).unwrap();
    let exp = expected();
    let f = b.infer_features(&probe()).unwrap();
    assert_eq!(<[usize; 3]>::from(f.shape()), exp.shape);
    for (c, want) in exp.channel_sums.iter().enumerate() {
        let got: f64 = f.channel_values(c).iter().sum();
        assert!((got - want).abs() <= 1e-4 * want.abs().max(1.0), "channel {c}: {got} vs {want}");
    }
    let cell = f.channel_values(0)[5 * 13 + 7];
    assert!((cell - exp.cell_0_5_7).abs() < 1e-5);
    assert!(f.values().iter().all(|v| *v >= 0.0));
    assert_eq!(f, b.infer_features(&probe()).unwrap());
}

#[test]
fn class_scores_match_reference() {
    let b = OnnxBackend::load(config()).unwrap();
    let exp = expected();
    let scores = b.infer_class_scores(&[probe(), probe()]).unwrap();
    assert_eq!(scores.len(), 2);
    assert!((scores[0] - exp.prob[1]).abs() < 1e-5, "{} vs {}", scores[0], exp.prob[1]);
    assert_eq!(scores[0], scores[1]);
    assert!(b.infer_class_scores(&[]).unwrap().is_empty());
}

#[test]
fn wrong_size_names_the_index() {
    let b = OnnxBackend::load(config()).unwrap();
    let small = RgbImage::new(100, 100);
    match b.infer_class_scores(&[probe(), small]) {
        Err(Error::WrongInputSize { index, expected, .. }) => assert_eq!((index, expected), (1, 227)),
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(b.infer_features(&RgbImage::new(5, 5)), Err(Error::WrongInputSize { .. })));
}

#[test]
fn missing_tensor_is_reported_by_name() {
    let mut cfg = config();
    cfg.feature_tensor = "conv9".into();
    match OnnxBackend::load(cfg) {
        Err(Error::MissingLayer(name)) => assert_eq!(name, "conv9"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("load should fail"),
    }
    let mut cfg = config();
    cfg.path = fixtures().join("absent.onnx");
    assert!(matches!(OnnxBackend::load(cfg), Err(Error::Io(_))));
}
