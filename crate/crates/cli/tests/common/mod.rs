#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use synthpipe_testkit::{RefDetection, RefImage};

pub const FIXTURE_SEED: u64 = 20_240_611;

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_synthpipe"))
}

pub fn synthpipe(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

pub fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval")
}

fn cents(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo..hi) * 100.0).round() / 100.0
}

/// A synthetic scene set and a noisy detector's output over it: COCO ground
/// truth and a detections array, both as JSON.
pub fn build_fixture(seed: u64) -> (Value, Value) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (640.0, 480.0);
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    let mut detections = Vec::new();
    for i in 0..40u64 {
        let name = format!("img_{:06}_{}", i / 4, i % 4);
        images.push(json!({ "id": i + 1, "file_name": format!("{name}.png"), "width": w as u32, "height": h as u32 }));
        for _ in 0..rng.random_range(0..6) {
            let (bw, bh) = (cents(&mut rng, 12.0, 120.0), cents(&mut rng, 20.0, 200.0));
            let (x, y) = (cents(&mut rng, 0.0, w - bw), cents(&mut rng, 0.0, h - bh));
            annotations.push(json!({
                "id": annotations.len() + 1,
                "image_id": i + 1,
                "category_id": 1,
                "bbox": [x, y, bw, bh],
            }));
            if rng.random_bool(0.85) {
                let jitter = |rng: &mut ChaCha8Rng, v: f64, s: f64| v + cents(rng, -s, s);
                let dx = jitter(&mut rng, x, bw * 0.08).max(0.0);
                let dy = jitter(&mut rng, y, bh * 0.08).max(0.0);
                let dw = jitter(&mut rng, bw, bw * 0.08).min(w - dx).max(1.0);
                let dh = jitter(&mut rng, bh, bh * 0.08).min(h - dy).max(1.0);
                let score = (rng.random_range(0.4..1.0f64) * 1000.0).round() / 1000.0;
                detections.push(json!({ "image_id": name, "bbox": [dx, dy, dw, dh], "score": score }));
            }
        }
        for _ in 0..rng.random_range(0..3) {
            let (bw, bh) = (cents(&mut rng, 10.0, 90.0), cents(&mut rng, 10.0, 150.0));
            let (x, y) = (cents(&mut rng, 0.0, w - bw), cents(&mut rng, 0.0, h - bh));
            let score = (rng.random_range(0.0..0.8f64) * 1000.0).round() / 1000.0;
            detections.push(json!({ "image_id": name, "bbox": [x, y, bw, bh], "score": score }));
        }
    }
    let coco = json!({
        "images": images,
        "annotations": annotations,
        "categories": [{ "id": 1, "name": "worker" }],
    });
    (coco, Value::Array(detections))
}

/// One JSON value per line, collected into an array.
pub fn read_ndjson(path: &Path) -> Value {
    let text = std::fs::read_to_string(path).unwrap();
    Value::Array(text.lines().filter(|l| !l.trim().is_empty()).map(|l| serde_json::from_str(l).unwrap()).collect())
}

pub fn to_ndjson(values: &Value) -> String {
    values.as_array().unwrap().iter().map(|v| v.to_string() + "\n").collect()
}

/// The brute-force reference's view of a fixture.
pub fn reference_inputs(coco: &Value, detections: &Value) -> (Vec<RefImage>, Vec<RefDetection>) {
    let mut images: Vec<RefImage> = coco["images"]
        .as_array()
        .unwrap()
        .iter()
        .map(|im| RefImage {
            id: Path::new(im["file_name"].as_str().unwrap()).file_stem().unwrap().to_string_lossy().into_owned(),
            boxes: Vec::new(),
        })
        .collect();
    for a in coco["annotations"].as_array().unwrap() {
        let idx = a["image_id"].as_u64().unwrap() as usize - 1;
        images[idx].boxes.push(as_box(&a["bbox"]));
    }
    let dets = detections
        .as_array()
        .unwrap()
        .iter()
        .map(|d| RefDetection {
            image: d["image_id"].as_str().unwrap().to_string(),
            bbox: as_box(&d["bbox"]),
            score: d["score"].as_f64().unwrap(),
        })
        .collect();
    (images, dets)
}

fn as_box(v: &Value) -> [f64; 4] {
    let a = v.as_array().unwrap();
    std::array::from_fn(|i| a[i].as_f64().unwrap())
}
