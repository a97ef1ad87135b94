use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use serde_json::Value;

fn sess() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sess"))
}

fn run(args: &[&str]) -> Output {
    sess().args(args).output().expect("sess runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "sess {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Dark image with a bright square in the given corner (0 TL .. 3 BR).
fn write_scene(path: &Path, (h, w): (u32, u32), corner: u32) {
    let side = 40;
    let top = if corner < 2 { 20 } else { h - side - 20 };
    let left = if corner % 2 == 0 { 20 } else { w - side - 20 };
    let img = RgbImage::from_fn(w, h, |x, y| {
        if (top..top + side).contains(&y) && (left..left + side).contains(&x) {
            Rgb([255, 255, 255])
        } else {
            Rgb([12, 12, 12])
        }
    });
    img.save(path).unwrap();
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const FAST: [&str; 8] = ["--model", "mock:quadrant", "--occluder", "56", "--stride", "56", "--batch", "16"];

#[test]
fn saliency_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    write_scene(&img, (240, 300), 0);
    let out = dir.path().join("out");
    let mut args = vec!["saliency", "--image", p(&img), "--scales", "2", "--out", p(&out)];
    args.extend(FAST);
    ok(&args);
    for f in ["saliency.png", "saliency.f32", "overlay.png", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["class"], 0, "top-1 of a top-left scene");
    assert_eq!(m["dims"], serde_json::json!([240, 300]));
    assert_eq!(m["config"]["n_scales"], 2);
    assert_eq!(m["config"]["smoothing"]["enabled"], true);
    assert_eq!(m["model"]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(m["patches"].as_array().unwrap().len(), 2 + 4);
    assert_eq!(m["timings"].as_array().unwrap().len(), 7);
    let raw = std::fs::read(out.join("saliency.f32")).unwrap();
    assert_eq!(raw.len(), 240 * 300 * 4);
    let ov = image::open(out.join("overlay.png")).unwrap();
    assert_eq!((ov.width(), ov.height()), (300, 240));
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    write_scene(&img, (230, 260), 3);
    let out = dir.path().join("first");
    let mut args = vec![
        "saliency", "--image", p(&img), "--scales", "2", "--base", "rise", "--masks", "24",
        "--seed", "5", "--class", "3", "--out", p(&out), "--model", "mock:quadrant",
    ];
    args.extend(["--prefilter", "40"]);
    ok(&args);
    let again = dir.path().join("again");
    ok(&["rerun", p(&out.join("manifest.json")), "--out", p(&again)]);
    assert_eq!(
        std::fs::read(out.join("saliency.f32")).unwrap(),
        std::fs::read(again.join("saliency.f32")).unwrap()
    );
    let m = read_json(&again.join("manifest.json"));
    assert_eq!(m["base"]["kind"], "rise");
    assert_eq!(m["base"]["rng_seed"], 5);
}

#[test]
fn identity_reduction_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("square.png");
    write_scene(&img, (224, 224), 1);
    let a = dir.path().join("a");
    let mut args = vec![
        "saliency", "--image", p(&img), "--scales", "1", "--prefilter", "0", "--no-smooth",
        "--class", "1", "--out", p(&a),
    ];
    args.extend(FAST);
    ok(&args);
    let m = read_json(&a.join("manifest.json"));
    assert_eq!(m["patches"].as_array().unwrap().len(), 1);
    let raw = std::fs::read(a.join("saliency.f32")).unwrap();
    let vals: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    let max = vals.iter().cloned().fold(f32::MIN, f32::max);
    let min = vals.iter().cloned().fold(f32::MAX, f32::min);
    assert_eq!((min, max), (0.0, 1.0));
}

#[test]
fn exit_codes_by_category() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    write_scene(&img, (224, 224), 0);
    let missing = run(&["saliency", "--image", "/nonexistent.png", "--model", "mock:quadrant"]);
    assert_eq!(missing.status.code(), Some(2));
    let bad_class = run(&["saliency", "--image", p(&img), "--model", "mock:quadrant", "--class", "7"]);
    assert_eq!(bad_class.status.code(), Some(2));
    let bad_model = run(&["saliency", "--image", p(&img), "--model", "mock:unknown"]);
    assert_eq!(bad_model.status.code(), Some(3));
    let bad_scales = run(&["saliency", "--image", p(&img), "--model", "mock:quadrant", "--scales", "13"]);
    assert_eq!(bad_scales.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_scales.stderr).contains("scales"));
}

#[cfg(unix)]
#[test]
fn failing_adapter_is_a_model_error() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    write_scene(&img, (224, 224), 0);
    let out = run(&[
        "saliency", "--image", p(&img), "--model", "mock:quadrant", "--scales", "1",
        "--base", "external", "--adapter", "false",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("patch #0"));
}

fn write_dataset(dir: &Path, n: u32, with_boxes: bool) -> PathBuf {
    let mut lines = String::new();
    for i in 0..n {
        let corner = i % 4;
        let name = format!("img{i}.png");
        write_scene(&dir.join(&name), (224, 280), corner);
        let (h, w) = (224, 280);
        let top = if corner < 2 { 20 } else { h - 60 };
        let left = if corner % 2 == 0 { 20 } else { w - 60 };
        if with_boxes {
            lines += &format!(
                "{{\"image\": \"{name}\", \"objects\": [{{\"class\": {corner}, \"bbox\": [{left}, {top}, {}, {}]}}], \"difficult\": {}}}\n",
                left + 39,
                top + 39,
                i % 2 == 1
            );
        } else {
            lines += &format!("{{\"image\": \"{name}\", \"class\": {corner}}}\n");
        }
    }
    let path = dir.join(if with_boxes { "boxes.jsonl" } else { "data.jsonl" });
    std::fs::write(&path, lines).unwrap();
    path
}

#[test]
fn insdel_report_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 3, false);
    let full = dir.path().join("full");
    let mut base = vec!["eval-insdel", "--dataset", p(&data), "--scales", "2", "--prefilter", "50"];
    base.extend(FAST);

    let mut args = base.clone();
    args.extend(["--out", p(&full)]);
    ok(&args);
    let report = read_json(&full.join("report.json"));
    assert_eq!(report["complete"], true);
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    assert_eq!(report["echo"]["config"]["smoothing"]["enabled"], false);
    let summary = std::fs::read_to_string(full.join("summary.csv")).unwrap();
    assert!(summary.starts_with("metric,value\ninsertion,"));
    let overall = report["summary"]["overall"].as_f64().unwrap();
    assert_eq!((overall * 10.0).round() / 10.0, overall);

    let part = dir.path().join("part");
    let mut args = base.clone();
    args.extend(["--out", p(&part), "--max-images", "1"]);
    ok(&args);
    let partial = read_json(&part.join("report.json"));
    assert_eq!(partial["complete"], false);
    assert_eq!(partial["rows"].as_array().unwrap().len(), 1);
    let mut args = base.clone();
    args.extend(["--out", p(&part)]);
    ok(&args);
    assert_eq!(read_json(&part.join("report.json")), report);

    let mut args = base.clone();
    args.extend(["--out", p(&part), "--step", "112"]);
    assert_eq!(run(&args).status.code(), Some(2));
}

#[test]
fn pointing_report_with_difficult_split() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 4, true);
    let out = dir.path().join("pg");
    let mut args = vec![
        "eval-pointing", "--dataset", p(&data), "--scales", "2", "--prefilter", "0", "--out", p(&out),
    ];
    args.extend(FAST);
    ok(&args);
    let report = read_json(&out.join("report.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let hits = rows.iter().filter(|r| r["hit"] == true).count();
    let acc = report["summary"]["all"]["mean_acc"].as_f64().unwrap();
    assert_eq!(acc, hits as f64 / 4.0);
    assert!(report["summary"]["difficult"].is_object());
    let csv = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(csv.starts_with("class,all,difficult\n"));
    assert!(csv.contains("\nmean,"));

    let missing = run(&["eval-pointing", "--dataset", "/nonexistent/boxes.jsonl", "--model", "mock:quadrant"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn sweep_single_point_and_partial() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_dataset(dir.path(), 2, false);
    let out = dir.path().join("sw");
    let mut args = vec!["sweep", "--axis", "scales", "--values", "2", "--dataset", p(&data), "--out", p(&out)];
    args.extend(FAST);
    ok(&args);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "scales,insertion,deletion,overall,images,failed");
    assert_eq!(lines.len(), 2);
    assert!(out.join("curves.png").exists());
    assert!(out.join("overall.png").exists());

    let out2 = dir.path().join("sw2");
    let mut args = vec![
        "sweep", "--axis", "prefilter", "--values", "0,50,100", "--dataset", p(&data), "--scales", "2",
        "--out", p(&out2),
    ];
    args.extend(FAST);
    let res = run(&args);
    assert_eq!(res.status.code(), Some(2));
    let csv = std::fs::read_to_string(out2.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn inspect_patches_montage() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    write_scene(&img, (300, 300), 0);
    let out = dir.path().join("inspect");
    let mut args = vec![
        "inspect-patches", "--image", p(&img), "--scales", "5", "--prefilter", "0", "--class", "0",
        "--out", p(&out),
    ];
    args.extend(FAST);
    ok(&args);
    let csv = std::fs::read_to_string(out.join("scores.csv")).unwrap();
    // Per-axis origin counts 1, 2, 2, 2, 3 at 300x300.
    assert_eq!(csv.lines().count(), 1 + 1 + 4 + 4 + 4 + 9);
    let montage = image::open(out.join("montage.png")).unwrap();
    assert_eq!(montage.height(), 5 * (128 + 6));
}

#[test]
fn onnx_fixture_model() {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures");
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("scene.png");
    write_scene(&img, (224, 224), 2);
    let out = dir.path().join("onnx");
    ok(&[
        "saliency", "--image", p(&img), "--model", p(&fixtures.join("quadrant.onnx")), "--scales", "1",
        "--occluder", "56", "--stride", "56", "--out", p(&out),
    ]);
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["class"], 2);
    assert!(m["model"]["meta"].as_str().unwrap().ends_with("quadrant.json"));

    let bad = run(&[
        "saliency", "--image", p(&img), "--model", p(&fixtures.join("two_inputs.onnx")),
        "--meta", p(&fixtures.join("quadrant.json")),
    ]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn worker_env_is_validated() {
    let out = sess()
        .args(["saliency", "--image", "x.png", "--model", "mock:quadrant"])
        .env("SESS_NUM_WORKERS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
