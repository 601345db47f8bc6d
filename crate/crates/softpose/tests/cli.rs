use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SCENE: &str = r#"{
  "mesh": {"kind": "unit_cube"},
  "camera": {"fx": 90, "fy": 90, "cx": 32, "cy": 32, "width": 64, "height": 64},
  "loss": {"ms_ssim_scales": 3},
  "scene": {"gt_pose": {"rotation": [[1,0,0],[0,0.8,-0.6],[0,0.6,0.8]], "translation": [0.05, 0, 4]}},
  "seed": 5
  EXTRA
}"#;

fn config(dir: &Path, name: &str, extra: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, SCENE.replace("EXTRA", extra)).unwrap();
    path
}

fn softpose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_softpose")).args(args).output().unwrap()
}

fn run(args: &[&str]) -> Output {
    let out = softpose(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// The summary with its wall-time field removed.
fn timeless(path: &Path) -> Value {
    let mut v = json(path);
    v.as_object_mut().unwrap().remove("wall_time_s");
    v
}

#[test]
fn render_is_deterministic_and_round_trips_depth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["render", "--config", s(&cfg), "--out", s(&a)]);
    run(&["render", "--config", s(&cfg), "--out", s(&b)]);
    for f in ["color.png", "depth.png", "mask.png"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let depth = softpose::png_io::read_depth(&a.join("depth.png")).unwrap();
    let run_cfg = softpose::RunConfig::load(&cfg).unwrap();
    let mesh = run_cfg.load_mesh().unwrap();
    let out = softpose_core::render(&mesh, &run_cfg.render_pose().unwrap(), &run_cfg.camera, &run_cfg.render).unwrap();
    assert!(depth.data.iter().any(|&d| d > 0.0));
    for (a, b) in out.hard_depth.data.iter().zip(&depth.data) {
        assert!((a - b).abs() <= 0.5e-4 + 1e-12);
    }
}

#[test]
fn missing_mesh_and_bad_keys_fail_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, SCENE.replace(r#"{"kind": "unit_cube"}"#, r#"{"kind": "loaded", "path": "gone.obj"}"#).replace("EXTRA", "")).unwrap();
    let out = softpose(&["render", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mesh file not found"));
    assert!(!dir.path().join("o").exists());

    let cfg = config(dir.path(), "typo.json", r#", "optim": {"patiense": 3}"#);
    let out = softpose(&["refine", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field `patiense`"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn refine_from_the_pseudo_pose_stays_put() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", r#", "optim": {"max_iters": 60}"#);
    let out = dir.path().join("o");
    run(&["refine", "--config", s(&cfg), "--out", s(&out)]);
    let summary = json(&out.join("summary.json"));
    assert!(summary["errors"]["best"]["rot_deg"].as_f64().unwrap() < 0.1);
    assert_eq!(summary["depth_unit_m"].as_f64(), Some(1e-4));
    assert!(summary["terms"]["chamfer"]["raw"].is_f64());
    let rows = fs::read_to_string(out.join("trace.csv")).unwrap().lines().count() - 1;
    assert!(rows >= 1 && rows <= 60);
    let pose = json(&out.join("pose.json"));
    assert_eq!(pose["rotation"].as_array().unwrap().len(), 3);
    assert!(out.join("trace.svg").exists());
}

#[test]
fn batch_refine_is_deterministic_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let extra = r#", "optim": {"max_iters": 25}, "init": {"perturbation": {"rot_deg": 5, "trans_frac": 0.02}, "trials": 3}"#;
    let cfg = config(dir.path(), "c.json", extra);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&["refine", "--config", s(&cfg), "--out", s(&a)]);
    run(&["refine", "--config", s(&cfg), "--out", s(&b), "--jobs", "2"]);
    for t in 0..3 {
        let run_dir = format!("run_000_{t:03}");
        for f in ["trace.csv", "pose.json", "trace.svg"] {
            assert_eq!(fs::read(a.join(&run_dir).join(f)).unwrap(), fs::read(b.join(&run_dir).join(f)).unwrap());
        }
        assert_eq!(timeless(&a.join(&run_dir).join("summary.json")), timeless(&b.join(&run_dir).join("summary.json")));
    }
    assert_eq!(fs::read(a.join("poses.jsonl")).unwrap(), fs::read(b.join("poses.jsonl")).unwrap());
    let batch = json(&a.join("summary.json"));
    assert_eq!(batch["runs"].as_u64(), Some(3));
    // distinct trials start from distinct poses
    let traces: Vec<String> = (0..3).map(|t| fs::read_to_string(a.join(format!("run_000_{t:03}/trace.csv"))).unwrap()).collect();
    assert_ne!(traces[0], traces[1]);
}

#[test]
fn depthless_frames_need_rgb_only() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", "");
    let frame = dir.path().join("frame");
    run(&["synth", "--config", s(&cfg), "--out", s(&frame), "--rgb-only"]);
    assert!(!frame.join("depth.png").exists());
    let refine_cfg = dir.path().join("r.json");
    let text = SCENE.replace("EXTRA", r#", "frames": ["frame"], "optim": {"max_iters": 10}, "init": {"perturbation": {"rot_deg": 3}}"#);
    fs::write(&refine_cfg, text).unwrap();
    let out = softpose(&["refine", "--config", s(&refine_cfg), "--out", s(&dir.path().join("rgbd"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("depth is missing"));
    run(&["refine", "--config", s(&refine_cfg), "--out", s(&dir.path().join("rgb")), "--rgb-only"]);
    let summary = json(&dir.path().join("rgb/summary.json"));
    assert!(summary["terms"].get("chamfer").is_none());
    assert!(summary["errors"]["init"]["rot_deg"].as_f64().unwrap() > 2.9);
}

#[test]
fn non_finite_gradients_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    // each weight is finite on its own; their weighted sum overflows
    let cfg = config(dir.path(), "c.json", r#", "weights": {"lambda1": 1e308, "lambda4": 1e308, "lambda5": 1e308, "lambda7": 1e308, "lambda8": 1e308}, "init": {"perturbation": {"rot_deg": 5}}"#);
    let out = dir.path().join("o");
    let res = softpose(&["refine", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(json(&out.join("summary.json"))["status"], "non_finite_loss");
}

fn pose_line(t: [f64; 3]) -> String {
    format!(r#"{{"rotation": [[0,-1,0],[1,0,0],[0,0,1]], "translation": [{}, {}, {}]}}"#, t[0], t[1], t[2])
}

#[test]
fn evaluate_reports_recall_auc_and_angle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", "");
    let gt = dir.path().join("gt.jsonl");
    fs::write(&gt, format!("{}\n{}\n", pose_line([0.0, 0.0, 2.0]), pose_line([0.1, 0.0, 3.0]))).unwrap();
    let out = dir.path().join("same");
    run(&["evaluate", "--config", s(&cfg), "--pred", s(&gt), "--gt", s(&gt), "--out", s(&out)]);
    let v = json(&out.join("evaluation.json"));
    assert_eq!(v["recall_add_0_1d"].as_f64(), Some(100.0));
    assert_eq!(v["auc_add_s"].as_f64(), Some(100.0));
    assert_eq!(v["auc_add_or_s"].as_f64(), Some(100.0));
    assert_eq!(v["mean_rot_err_deg"].as_f64(), Some(0.0));
    assert_eq!(fs::read_to_string(out.join("evaluation.csv")).unwrap().lines().count(), 3);

    // one exact pose and one off by 0.05 m along x: AUC over [0, 0.1 m] is the mean of 100 and 50
    let pred = dir.path().join("pred.jsonl");
    fs::write(&pred, format!("{}\n{}\n", pose_line([0.0, 0.0, 2.0]), pose_line([0.15, 0.0, 3.0]))).unwrap();
    let out = dir.path().join("half");
    run(&["evaluate", "--config", s(&cfg), "--pred", s(&pred), "--gt", s(&gt), "--out", s(&out)]);
    let v = json(&out.join("evaluation.json"));
    assert!((v["auc_add_s"].as_f64().unwrap() - 75.0).abs() < 1e-9);

    let short = dir.path().join("short.jsonl");
    fs::write(&short, pose_line([0.0, 0.0, 2.0])).unwrap();
    let res = softpose(&["evaluate", "--config", s(&cfg), "--pred", s(&short), "--gt", s(&gt), "--out", s(&out)]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("pose count mismatch"));

    let broken = dir.path().join("broken.jsonl");
    fs::write(&broken, format!("{}\n{{\"rotation\": 1}}\n", pose_line([0.0; 3]))).unwrap();
    let res = softpose(&["evaluate", "--config", s(&cfg), "--pred", s(&broken), "--gt", s(&gt), "--out", s(&out)]);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
}

#[test]
fn gradcheck_gates_on_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "c.json", "");
    let out = dir.path().join("ok");
    run(&["gradcheck", "--config", s(&cfg), "--out", s(&out)]);
    let report = json(&out.join("gradcheck.json"));
    let terms: Vec<&str> = report["terms"].as_array().unwrap().iter().map(|t| t["term"].as_str().unwrap()).collect();
    assert_eq!(terms, ["mask", "ab", "ms_ssim", "perceptual", "pm", "chamfer"]);

    // with rgb_only the chamfer term is not enabled and so is not checked
    let out = dir.path().join("rgb");
    run(&["gradcheck", "--config", s(&cfg), "--out", s(&out), "--rgb-only"]);
    assert_eq!(json(&out.join("gradcheck.json"))["terms"].as_array().unwrap().len(), 5);

    let hard = config(dir.path(), "hard.json", r#", "render": {"sigma": 1e-8}"#);
    let res = softpose(&["gradcheck", "--config", s(&hard), "--out", s(&dir.path().join("hard"))]);
    assert_eq!(res.status.code(), Some(1));
    assert_eq!(json(&dir.path().join("hard/gradcheck.json"))["passed"], false);
}
