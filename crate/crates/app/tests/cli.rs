use std::fs;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde_json::{json, Value};
use trafficgen_app::cli::{run, Cli, FAILURE_MARKER, HISTOGRAM_FILE, LOSS_LOG};
use trafficgen_app::SceneRequest;

fn toy_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml")
}

fn trafficgen(args: &[&str]) -> anyhow::Result<()> {
    let config = toy_config();
    let mut full = vec!["trafficgen", "--config", config.to_str().unwrap()];
    full.extend_from_slice(args);
    run(Cli::try_parse_from(full)?)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn shipped_configs_parse() {
    for name in ["toy.toml", "full.toml"] {
        let path = toy_config().with_file_name(name);
        let cli = Cli::try_parse_from(["trafficgen", "--config", p(&path), "serve"]).unwrap();
        cli.app_config().unwrap();
    }
}

#[test]
fn dataset_train_evaluate_generate() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    trafficgen(&["build-dataset", "--synthetic", "6", "--out", p(&data), "--seed", "4"]).unwrap();
    assert!(data.join("manifest.json").exists());
    assert!(data.join(HISTOGRAM_FILE).exists());

    let again = tmp.path().join("again");
    trafficgen(&["build-dataset", "--synthetic", "6", "--out", p(&again), "--seed", "4"]).unwrap();
    assert_eq!(tree(&data), tree(&again), "build-dataset is not reproducible");

    let run_dir = tmp.path().join("run");
    trafficgen(&["train", "--dataset", p(&data), "--steps", "2", "--out", p(&run_dir)]).unwrap();
    let log = fs::read_to_string(run_dir.join(LOSS_LOG)).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["g_loss"].as_f64().unwrap().is_finite());
    }
    assert!(!run_dir.join(FAILURE_MARKER).exists());

    trafficgen(&["train", "--dataset", p(&data), "--steps", "1", "--out", p(&run_dir), "--resume", p(&run_dir)]).unwrap();
    let log = fs::read_to_string(run_dir.join(LOSS_LOG)).unwrap();
    let last: Value = serde_json::from_str(log.lines().last().unwrap()).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert_eq!(last["step"], 3);

    let report = tmp.path().join("report.json");
    trafficgen(&["evaluate", "--checkpoint", p(&run_dir), "--dataset", p(&data), "--out", p(&report)]).unwrap();
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["fid"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["images_evaluated"], 6);
    assert!(r["excluded_classes"].as_array().unwrap().contains(&json!("bus")));

    let scene = tmp.path().join("scene.json");
    fs::write(
        &scene,
        json!({"version": 1, "entities": [{"class": "truck", "bbox": {"x": 0.5, "y": 0.5, "w": 0.3, "h": 0.2},
               "color": {"centers": [[0.9, 0.1, 0.1], [0.9, 0.1, 0.1], [0.9, 0.1, 0.1], [0.9, 0.1, 0.1], [0.9, 0.1, 0.1]],
                         "weights": [0.2, 0.2, 0.2, 0.2, 0.2]}}],
               "time_of_day": "07:15", "seed": 2})
        .to_string(),
    )
    .unwrap();
    let a = tmp.path().join("a.png");
    let b = tmp.path().join("b.png");
    trafficgen(&["generate", "--scene", p(&scene), "--checkpoint", p(&run_dir), "--out", p(&a)]).unwrap();
    trafficgen(&["generate", "--scene", p(&scene), "--checkpoint", p(&run_dir), "--out", p(&b)]).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(image::open(&a).unwrap().width(), 64);
}

#[test]
fn generate_empty_scene_without_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("empty.json");
    fs::write(&scene, r#"{"version": 1, "entities": [], "time_of_day": "12:00"}"#).unwrap();
    let out = tmp.path().join("img.png");
    trafficgen(&["generate", "--scene", p(&scene), "--out", p(&out)]).unwrap();
    let img = image::open(&out).unwrap();
    assert_eq!((img.width(), img.height()), (64, 64));
}

#[test]
fn generate_reports_field_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("bad.json");
    fs::write(
        &scene,
        r#"{"version": 1, "entities": [{"class": "car", "bbox": {"x": 0.5, "y": 0.5, "w": 0.1, "h": 0.1}, "color": "purple"}], "time_of_day": "12:00"}"#,
    )
    .unwrap();
    let err = trafficgen(&["generate", "--scene", p(&scene), "--out", p(&tmp.path().join("x.png"))]).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("entities[0].color") && msg.contains("magenta"), "{msg}");
}

#[test]
fn sumo_convert_matches_hand_computation() {
    let tmp = tempfile::tempdir().unwrap();
    let lanes = tmp.path().join("lanes.json");
    fs::write(
        &lanes,
        json!({"lanes": {"north_0": {
            "control_points": [[0.5, 0.1], [0.5, 0.3], [0.5, 0.6], [0.5, 0.9]],
            "waypoints": [{"sim_offset": 0.0, "image_arclength": 0.0}, {"sim_offset": 100.0, "image_arclength": 1.0}]
        }}})
        .to_string(),
    )
    .unwrap();
    let frames = tmp.path().join("frames.json");
    fs::write(
        &frames,
        json!([
            {"id": "v1", "lane_id": "north_0", "offset": 25.0, "class": "car", "color": "red", "time": 36000.0},
            {"id": "v2", "lane_id": "north_0", "offset": 75.0, "class": "bus", "color": [250, 250, 0], "time": 36000.0},
            {"id": "v3", "lane_id": "south_9", "offset": 5.0, "class": "car", "color": "red", "time": 36000.0},
            {"id": "v4", "lane_id": "north_0", "offset": 50.0, "class": "car", "color": "gray", "time": 36001.0}
        ])
        .to_string(),
    )
    .unwrap();
    let mut classes = serde_json::Map::new();
    for (class, size) in [("car", [0.08, 0.05]), ("bus", [0.2, 0.1])] {
        classes.insert(class.into(), json!(vec![vec![size]; 4]));
    }
    let hist = tmp.path().join("hist.json");
    fs::write(&hist, json!({"bins": 2, "neighbor_merge": true, "classes": classes}).to_string()).unwrap();

    let out = tmp.path().join("scenes");
    trafficgen(&[
        "sumo-convert", "--frames", p(&frames), "--lanes", p(&lanes), "--histogram", p(&hist), "--out", p(&out),
        "--variant", "discrete",
    ])
    .unwrap();

    let first: SceneRequest = serde_json::from_str(&fs::read_to_string(out.join("frame-00000.json")).unwrap()).unwrap();
    assert_eq!(first.time_of_day, "10:00:00");
    // Straight vertical lane of length 0.8: offset 25 → y = 0.1 + 0.2, offset 75 → y = 0.7.
    let expected = [("car", 0.3, [0.08, 0.05], "red"), ("bus", 0.7, [0.2, 0.1], "yellow")];
    assert_eq!(first.entities.len(), 2);
    for (e, (class, y, [w, h], color)) in first.entities.iter().zip(expected) {
        assert_eq!(e.class, class);
        assert_eq!(e.color, json!(color));
        assert!((e.bbox["x"].as_f64().unwrap() - 0.5).abs() < 1e-9);
        assert!((e.bbox["y"].as_f64().unwrap() - y).abs() < 1e-9);
        assert!((e.bbox["w"].as_f64().unwrap() - w).abs() < 1e-12);
        assert!((e.bbox["h"].as_f64().unwrap() - h).abs() < 1e-12);
    }
    let second: SceneRequest = serde_json::from_str(&fs::read_to_string(out.join("frame-00001.json")).unwrap()).unwrap();
    assert_eq!(second.entities[0].color, json!("gray"));

    let errors: Value = serde_json::from_str(&fs::read_to_string(out.join("errors.json")).unwrap()).unwrap();
    assert_eq!(errors[0]["id"], "v3");
    assert_eq!(errors[0]["frame"], 0);
}

#[test]
fn sumo_convert_requires_box_sizes() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("f.json");
    fs::write(&f, "[]").unwrap();
    let lanes = tmp.path().join("l.json");
    fs::write(&lanes, r#"{"lanes": {}}"#).unwrap();
    let err = trafficgen(&["sumo-convert", "--frames", p(&f), "--lanes", p(&lanes), "--out", p(tmp.path())]).unwrap_err();
    assert!(err.to_string().contains("--histogram"), "{err}");
}
