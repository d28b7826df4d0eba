use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use oscface_core::synthetic::{random_scene, render_scene, Disc, SceneSpec};

fn oscface(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_oscface"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_jsonl(path: &Path, lines: &[String]) {
    fs::write(path, lines.iter().map(|l| format!("{l}\n")).collect::<String>()).unwrap();
}

fn box_json(x: f64, y: f64, w: f64, h: f64) -> String {
    format!("{{\"x\":{x},\"y\":{y},\"w\":{w},\"h\":{h}}}")
}

/// Every file under `dir` with its bytes, sorted by path.
fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn prepare_data_empty_annotations() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = tmp.path().join("ann.jsonl");
    fs::write(&ann, "").unwrap();
    let out = tmp.path().join("out");
    let o = oscface(&["prepare-data", "--annotations", s(&ann), "--images", s(tmp.path()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out.join("manifest.jsonl")).unwrap(), "");
}

#[test]
fn prepare_data_one_box_counts_and_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = SceneSpec::new(320, 240, vec![Disc { cx: 130.0, cy: 110.0, radius: 30.0 }], 2);
    render_scene(&scene).save(tmp.path().join("face1.png")).unwrap();
    let ann = tmp.path().join("ann.jsonl");
    write_jsonl(&ann, &[format!("{{\"image_id\":\"face1\",\"boxes\":[{}]}}", box_json(100.0, 80.0, 60.0, 60.0))]);
    let run = |out: &Path| {
        let o = oscface(&[
            "prepare-data", "--annotations", s(&ann), "--images", s(tmp.path()), "--out", s(out), "--seed", "7",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run(&a);
    run(&b);
    let manifest = fs::read_to_string(a.join("manifest.jsonl")).unwrap();
    let ops: Vec<String> = manifest
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["op"].as_str().unwrap().to_owned())
        .collect();
    let count = |pred: &dyn Fn(&str) -> bool| ops.iter().filter(|o| pred(o)).count();
    assert_eq!(count(&|o| o == "mask"), 1);
    assert_eq!(count(&|o| ["original", "darkened", "blurred", "occluded"].contains(&o)), 4);
    assert_eq!(count(&|o| o.starts_with("iou_")), 3);
    assert_eq!(count(&|o| o == "double_size"), 1);
    assert_eq!(count(&|o| o == "padded"), 1);
    assert_eq!(ops.len(), 10);
    assert!(a.join("pos/face1_0.png").is_file() && a.join("neg/face1_5.png").is_file());
    let strip = |v: Vec<(PathBuf, Vec<u8>)>| -> Vec<(PathBuf, Vec<u8>)> {
        // the resolved config names its own output directory
        v.into_iter().filter(|(p, _)| p != Path::new("config.json")).collect()
    };
    assert_eq!(strip(snapshot(&a)), strip(snapshot(&b)));
}

#[test]
fn rank_channels_reports_planted_channel() {
    let tmp = tempfile::tempdir().unwrap();
    let mut lines = Vec::new();
    for k in 0..10u64 {
        let spec = random_scene(k, 227, 227, 1, (60.0, 100.0), 0.0);
        render_scene(&spec).save(tmp.path().join(format!("img{k}.png"))).unwrap();
        let b = spec.ground_truth()[0];
        lines.push(format!("{{\"image_id\":\"img{k}\",\"boxes\":[{}]}}", box_json(b.x, b.y, b.w, b.h)));
    }
    let ann = tmp.path().join("ann.jsonl");
    write_jsonl(&ann, &lines);
    let out = tmp.path().join("rank");
    let o = oscface(&["rank-channels", "--annotations", s(&ann), "--images", s(tmp.path()), "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout).trim(), "osc_channel 196");
    let csv = fs::read_to_string(out.join("channel_ranking.csv")).unwrap();
    assert!(csv.starts_with("rank,channel,inside,outside\n1,196,"));
    assert_eq!(csv.lines().count(), 257);

    let cfg = tmp.path().join("one.json");
    fs::write(&cfg, r#"{"backend": {"kind": "synthetic", "channels": 1, "planted_channel": 0}}"#).unwrap();
    let out1 = tmp.path().join("rank1");
    let o = oscface(&[
        "rank-channels", "--config", s(&cfg), "--annotations", s(&ann), "--images", s(tmp.path()), "--out", s(&out1),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(out1.join("channel_ranking.csv")).unwrap().lines().count(), 2);
}

#[test]
fn detect_blank_and_two_discs() {
    let tmp = tempfile::tempdir().unwrap();
    let blank = tmp.path().join("blank.png");
    RgbImage::from_pixel(240, 240, Rgb([80, 80, 80])).save(&blank).unwrap();
    let discs = tmp.path().join("discs.png");
    let spec = SceneSpec::new(
        320,
        320,
        vec![Disc { cx: 80.0, cy: 90.0, radius: 35.0 }, Disc { cx: 230.0, cy: 220.0, radius: 45.0 }],
        3,
    );
    render_scene(&spec).save(&discs).unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = oscface(&["detect", s(&blank), s(&discs), "--out", s(out), "--emit-heatmaps"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(a.join("detections.txt")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(&lines[..3], &["blank", "0", "discs"]);
    assert_eq!(lines[3], "2");
    assert_eq!(text, fs::read_to_string(b.join("detections.txt")).unwrap());
    assert!(a.join("heatmaps/discs.png").is_file());
    let jsonl = fs::read_to_string(a.join("detections.jsonl")).unwrap();
    let recs: Vec<serde_json::Value> = jsonl.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[1]["image_id"], "discs");
    assert_eq!(recs[1]["detections"].as_array().unwrap().len(), 2);

    // the written config reproduces the run
    let c = tmp.path().join("c");
    let o = oscface(&["detect", s(&blank), s(&discs), "--config", s(&a.join("config.json")), "--out", s(&c)]);
    assert!(o.status.success());
    assert_eq!(text, fs::read_to_string(c.join("detections.txt")).unwrap());
}

#[test]
fn detect_reports_undecodable_image() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.png");
    fs::write(&bad, b"not a png").unwrap();
    let good = tmp.path().join("good.png");
    RgbImage::from_pixel(100, 100, Rgb([10, 10, 10])).save(&good).unwrap();
    let out = tmp.path().join("o");
    assert_eq!(oscface(&["detect", s(&bad), s(&good), "--out", s(&out)]).status.code(), Some(1));
    assert_eq!(fs::read_to_string(out.join("detections.txt")).unwrap(), "good\n0\n");
    assert_eq!(oscface(&["detect", s(&bad), "--out", s(&out)]).status.code(), Some(1));
}

fn eval_fixture(dir: &Path) -> PathBuf {
    let ann = dir.join("gt.jsonl");
    write_jsonl(
        &ann,
        &[format!(
            "{{\"image_id\":\"fixture\",\"boxes\":[{},{}]}}",
            box_json(0.0, 0.0, 10.0, 10.0),
            box_json(20.0, 0.0, 10.0, 10.0)
        )],
    );
    ann
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn evaluate_hand_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = eval_fixture(tmp.path());
    let dets = tmp.path().join("dets.txt");
    fs::write(&dets, "fixture\n3\n0 0 10 10 0.9\n1 0 10 10 0.8\n20 0 10 8 0.7\n").unwrap();
    let run = |protocol: &str, out: &Path| {
        let o = oscface(&[
            "evaluate", "--detections", s(&dets), "--annotations", s(&ann), "--protocol", protocol, "--out", s(out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        summary(out)
    };
    let p = run("pascal", &tmp.path().join("p"));
    assert!((p["ap"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert!(tmp.path().join("p/pr.png").is_file());
    let d = run("fddb-discrete", &tmp.path().join("d"));
    assert_eq!(d["final_tpr"].as_f64().unwrap(), 1.0);
    assert_eq!(d["final_fp"].as_u64().unwrap(), 1);
    let c = run("fddb-continuous", &tmp.path().join("c"));
    assert!((c["final_tpr"].as_f64().unwrap() - 0.9).abs() < 1e-12);
    assert!(fs::read_to_string(tmp.path().join("c/roc.csv")).unwrap().starts_with("threshold,fp_count,tpr\n"));
}

#[test]
fn evaluate_perfect_and_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = eval_fixture(tmp.path());
    let perfect = tmp.path().join("perfect.txt");
    fs::write(&perfect, "fixture\n2\n0 0 10 10 0.9\n20 0 10 10 0.8\n").unwrap();
    let empty = tmp.path().join("empty.txt");
    fs::write(&empty, "fixture\n0\n").unwrap();
    for (dets, want) in [(&perfect, 1.0), (&empty, 0.0)] {
        let out = tmp.path().join(format!("o{want}"));
        let o = oscface(&[
            "evaluate", "--detections", s(dets), "--annotations", s(&ann), "--protocol", "pascal", "--out", s(&out),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(summary(&out)["ap"].as_f64().unwrap(), want);
    }
}

#[test]
fn evaluate_rejects_mismatched_ids() {
    let tmp = tempfile::tempdir().unwrap();
    let ann = eval_fixture(tmp.path());
    let dets = tmp.path().join("dets.txt");
    fs::write(&dets, "other\n0\n").unwrap();
    let o = oscface(&[
        "evaluate", "--detections", s(&dets), "--annotations", s(&ann), "--protocol", "pascal", "--out",
        s(&tmp.path().join("o")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("image id sets differ"));
}

#[test]
fn invalid_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let img = tmp.path().join("x.png");
    RgbImage::new(64, 64).save(&img).unwrap();
    let out = tmp.path().join("o");
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"detect": {"nms_iou": 1.5}}"#).unwrap();
    assert_eq!(oscface(&["detect", s(&img), "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
    fs::write(&cfg, r#"{"detcet": {}}"#).unwrap();
    assert_eq!(oscface(&["detect", s(&img), "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(oscface(&["detect", s(&img), "--osc-channel", "999", "--out", s(&out)]).status.code(), Some(2));
    assert_eq!(oscface(&["detect", s(&img)]).status.code(), Some(2));
}
