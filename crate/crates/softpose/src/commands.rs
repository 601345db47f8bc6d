//! The subcommands. Each reads a validated [`RunConfig`] and writes its outputs under `out_dir`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use softpose_core::gradcheck::{self, GradcheckReport};
use softpose_core::linalg;
use softpose_core::losses::{LossReport, Objective, ObjectiveInputs};
use softpose_core::metrics::{add_recall, auc, e_add, e_add_s, rotation_angle_error, translation_error, PoseEstimate, AUC_MAX_THRESHOLD, ADD_THRESHOLD_FRAC};
use softpose_core::optim::{refine_with, RefineError, Refinement};
use softpose_core::scene::{perturb_pose, synthesize};
use softpose_core::{render, Pose, SymmetrySet, TriMesh};

use crate::config::RunConfig;
use crate::frame::{read_frame, write_frame, Frame};
use crate::png_io::{self, DEPTH_UNIT_M};
use crate::pose_io::{load_pose_lines, pose_lines, PoseRecord};
use crate::svg::trace_svg;

/// Exit status for an aborted refinement.
pub const EXIT_NON_FINITE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub jobs: usize,
    pub debug_renders: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { jobs: 1, debug_renders: false }
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

/// Renders the mesh at the configured pose: `color.png`, `depth.png` (z-buffer) and `mask.png`.
pub fn cmd_render(cfg: &RunConfig) -> Result<()> {
    let mesh = cfg.load_mesh()?;
    let pose = cfg.render_pose()?;
    let out = render(&mesh, &pose, &cfg.camera, &cfg.render)?;
    create_dir(&cfg.out_dir)?;
    png_io::write_color(&cfg.out_dir.join("color.png"), &out.color)?;
    png_io::write_depth(&cfg.out_dir.join("depth.png"), &out.hard_depth)?;
    png_io::write_mask(&cfg.out_dir.join("mask.png"), &out.mask)?;
    Ok(())
}

fn synthesize_frame(cfg: &RunConfig, mesh: &TriMesh) -> Result<Frame> {
    let spec = cfg.scene_spec().context("config has neither `scene` nor `frames`")??;
    let scene = synthesize(mesh, &spec, &cfg.render)?;
    let mut sensor = scene.sensor;
    if cfg.rgb_only {
        sensor.depth = None;
    }
    Ok(Frame { sensor, pseudo: scene.pseudo, gt: Some(scene.gt) })
}

/// Writes the synthesized scene as a frame directory; `rgb_only` omits the depth image.
pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let mesh = cfg.load_mesh()?;
    let frame = synthesize_frame(cfg, &mesh)?;
    write_frame(&cfg.out_dir, &frame)?;
    Ok(())
}

fn load_frames(cfg: &RunConfig, mesh: &TriMesh) -> Result<Vec<Frame>> {
    if cfg.frames.is_empty() {
        return Ok(vec![synthesize_frame(cfg, mesh)?]);
    }
    cfg.frames.iter().map(|d| read_frame(d).with_context(|| format!("frame {}", d.display()))).collect()
}

/// Seed of the starting-pose perturbation for one (frame, trial) pair.
pub fn trial_seed(seed: u64, frame: usize, trial: usize) -> u64 {
    seed ^ (((frame as u64) << 32) | trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

#[derive(Debug, Clone, Serialize)]
pub struct PoseErrors {
    pub rot_deg: f64,
    pub trans_m: f64,
    pub e_add: f64,
    pub e_add_s: f64,
}

impl PoseErrors {
    pub fn new(pred: &Pose, gt: &Pose, mesh: &TriMesh) -> Result<Self> {
        Ok(Self {
            rot_deg: rotation_angle_error(pred, gt)?,
            trans_m: translation_error(pred, gt),
            e_add: e_add(pred, gt, mesh)?,
            e_add_s: e_add_s(pred, gt, mesh)?,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunErrors {
    pub init: PoseErrors,
    #[serde(rename = "final")]
    pub last: PoseErrors,
    pub best: PoseErrors,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermValue {
    pub raw: f64,
    pub weight: f64,
    pub weighted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    MaxIters,
    NonFiniteLoss,
}

/// Contents of a run's `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub frame: usize,
    pub trial: usize,
    pub init_seed: u64,
    pub depth_unit_m: f64,
    pub status: RunStatus,
    pub converged: bool,
    pub iterations: usize,
    pub best_iter: usize,
    pub initial_loss: f64,
    pub best_loss: f64,
    /// Terms at the returned (best) pose.
    pub terms: BTreeMap<String, TermValue>,
    pub dropped_terms: BTreeMap<String, String>,
    pub errors: Option<RunErrors>,
    pub wall_time_s: f64,
}

/// Everything one refinement run produced.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: RunSummary,
    pub refinement: Refinement,
}

fn term_values(report: &LossReport) -> (BTreeMap<String, TermValue>, BTreeMap<String, String>) {
    let terms = report
        .terms
        .iter()
        .map(|t| (t.term.name().to_string(), TermValue { raw: t.raw, weight: t.weight, weighted: t.weighted() }))
        .collect();
    let dropped = report.dropped.iter().map(|(t, e)| (t.name().to_string(), e.to_string())).collect();
    (terms, dropped)
}

struct Job<'a> {
    frame_index: usize,
    trial: usize,
    frame: &'a Frame,
    dir: PathBuf,
}

fn run_job(cfg: &RunConfig, opts: &RunOptions, mesh: &TriMesh, sym: &SymmetrySet, job: &Job<'_>) -> Result<RunResult> {
    let started = Instant::now();
    let frame = job.frame;
    let loss_opts = cfg.loss_options();
    let objective = Objective::new(ObjectiveInputs {
        mesh,
        sensor: &frame.sensor,
        pseudo: &frame.pseudo,
        heads: None,
        sym,
        weights: &cfg.weights,
        opts: &loss_opts,
        render_cfg: &cfg.render,
    })?;
    let seed = trial_seed(cfg.seed, job.frame_index, job.trial);
    let p = cfg.init.perturbation;
    let init = perturb_pose(&frame.pseudo.pose, p.rot_deg, p.trans_frac, mesh.diameter(), seed)?;

    let debug_dir = job.dir.join("debug");
    if opts.debug_renders {
        create_dir(&debug_dir)?;
    }
    let mut debug_error = None;
    let mut on_iter = |iter: usize, _: &Pose, eval: &softpose_core::losses::Evaluation| {
        if !opts.debug_renders || debug_error.is_some() {
            return;
        }
        let path = |kind: &str| debug_dir.join(format!("iter_{iter:04}_{kind}.png"));
        let res = png_io::write_color(&path("color"), &eval.render.color)
            .and_then(|_| png_io::write_depth(&path("depth"), &eval.render.hard_depth))
            .and_then(|_| png_io::write_mask(&path("mask"), &eval.render.mask));
        if let Err(e) = res {
            debug_error = Some(e);
        }
    };
    let (refinement, status) = match refine_with(&init, &objective, &cfg.optim, frame.gt.as_ref(), &mut on_iter) {
        Ok(r) => {
            let status = if r.converged { RunStatus::Converged } else { RunStatus::MaxIters };
            (r, status)
        }
        Err(RefineError::NonFiniteLoss { partial }) => (*partial, RunStatus::NonFiniteLoss),
        Err(e) => return Err(anyhow::Error::new(e).context(format!("refining frame {} trial {}", job.frame_index, job.trial))),
    };
    if let Some(e) = debug_error {
        return Err(e.into());
    }

    let (terms, dropped_terms) = if refinement.best_loss.is_finite() {
        term_values(&objective.evaluate(&refinement.best)?.report)
    } else {
        Default::default()
    };
    let errors = match &frame.gt {
        Some(gt) => Some(RunErrors {
            init: PoseErrors::new(&init, gt, mesh)?,
            last: PoseErrors::new(&refinement.last, gt, mesh)?,
            best: PoseErrors::new(&refinement.best, gt, mesh)?,
        }),
        None => None,
    };
    let summary = RunSummary {
        frame: job.frame_index,
        trial: job.trial,
        init_seed: seed,
        depth_unit_m: DEPTH_UNIT_M,
        status,
        converged: refinement.converged,
        iterations: refinement.iterations,
        best_iter: refinement.best_iter,
        initial_loss: refinement.initial_loss,
        best_loss: refinement.best_loss,
        terms,
        dropped_terms,
        errors,
        wall_time_s: started.elapsed().as_secs_f64(),
    };

    create_dir(&job.dir)?;
    write(&job.dir.join("trace.csv"), refinement.trace.to_csv())?;
    write(&job.dir.join("trace.svg"), trace_svg(&refinement.trace))?;
    write(&job.dir.join("summary.json"), json(&summary)?)?;
    write(&job.dir.join("pose.json"), json(&PoseRecord::from_pose(&refinement.best)?)?)?;
    Ok(RunResult { summary, refinement })
}

/// Runs `f` over `items` on up to `jobs` scoped threads; results keep the input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = jobs.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    let mut indexed: Vec<(usize, R)> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || items.iter().enumerate().skip(w).step_by(workers).map(|(i, x)| (i, f(x))).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    indexed.sort_by_key(|(i, _)| *i);
    indexed.into_iter().map(|(_, r)| r).collect()
}

/// Outcome of `refine` over every (frame, trial) pair.
#[derive(Debug, Clone)]
pub struct RefineOutcome {
    pub runs: Vec<RunResult>,
}

impl RefineOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.runs.iter().any(|r| r.summary.status == RunStatus::NonFiniteLoss) {
            EXIT_NON_FINITE
        } else {
            0
        }
    }
}

#[derive(Serialize)]
struct BatchSummary<'a> {
    depth_unit_m: f64,
    runs: usize,
    converged: usize,
    non_finite: usize,
    summaries: Vec<&'a RunSummary>,
}

/// Refines every frame `init.trials` times. A single run writes straight into `out_dir`;
/// batches get one `run_FFF_TTT` directory per run plus an aggregate `summary.json`.
/// `poses.jsonl` (best poses) and, when known, `gt.jsonl` are always written.
pub fn cmd_refine(cfg: &RunConfig, opts: &RunOptions) -> Result<RefineOutcome> {
    let mesh = cfg.load_mesh()?;
    let sym = cfg.load_symmetries()?;
    let frames = load_frames(cfg, &mesh)?;
    let single = frames.len() == 1 && cfg.init.trials == 1;
    let mut jobs = Vec::new();
    for (fi, frame) in frames.iter().enumerate() {
        for trial in 0..cfg.init.trials {
            let dir = if single { cfg.out_dir.clone() } else { cfg.out_dir.join(format!("run_{fi:03}_{trial:03}")) };
            jobs.push(Job { frame_index: fi, trial, frame, dir });
        }
    }
    create_dir(&cfg.out_dir)?;
    let runs = parallel_map(&jobs, opts.jobs, |job| run_job(cfg, opts, &mesh, &sym, job))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let best: Vec<Pose> = runs.iter().map(|r| r.refinement.best).collect();
    write(&cfg.out_dir.join("poses.jsonl"), pose_lines(&best)?)?;
    let gts: Option<Vec<Pose>> = jobs.iter().map(|j| j.frame.gt).collect();
    if let Some(gts) = gts {
        write(&cfg.out_dir.join("gt.jsonl"), pose_lines(&gts)?)?;
    }
    if !single {
        let batch = BatchSummary {
            depth_unit_m: DEPTH_UNIT_M,
            runs: runs.len(),
            converged: runs.iter().filter(|r| r.summary.converged).count(),
            non_finite: runs.iter().filter(|r| r.summary.status == RunStatus::NonFiniteLoss).count(),
            summaries: runs.iter().map(|r| &r.summary).collect(),
        };
        write(&cfg.out_dir.join("summary.json"), json(&batch)?)?;
    }
    Ok(RefineOutcome { runs })
}

/// Per-pose row of the evaluation CSV.
#[derive(Debug, Clone, Serialize)]
pub struct EvalRow {
    pub index: usize,
    pub e_add: f64,
    pub e_add_s: f64,
    pub rot_err_deg: f64,
    pub trans_err_m: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalSummary {
    pub count: usize,
    pub diameter: f64,
    pub mean_e_add: f64,
    pub mean_e_add_s: f64,
    /// Percentage of poses with ADD(-S) below a tenth of the diameter.
    pub recall_add_0_1d: f64,
    pub auc_add_s: f64,
    pub auc_add_or_s: f64,
    pub auc_max_threshold_m: f64,
    pub mean_rot_err_deg: f64,
}

/// Smallest rotation error over the symmetric equivalents of `gt`.
pub fn symmetric_angle_error(pred: &Pose, gt: &Pose, sym: &SymmetrySet) -> Result<f64> {
    let r_gt = gt.rotation()?;
    let mut best = f64::INFINITY;
    for s in sym.rotations() {
        let alt = Pose::from_rt(&linalg::mat_mul(&r_gt, s), gt.trans);
        best = best.min(rotation_angle_error(pred, &alt)?);
    }
    Ok(best)
}

/// Scores predicted against ground-truth poses (JSON Lines, one pose per line).
pub fn evaluate_poses(pred: &[Pose], gt: &[Pose], mesh: &TriMesh, sym: &SymmetrySet) -> Result<(Vec<EvalRow>, EvalSummary)> {
    if pred.len() != gt.len() {
        bail!("pose count mismatch: {} predicted vs {} ground truth", pred.len(), gt.len());
    }
    if pred.is_empty() {
        bail!("no poses to evaluate");
    }
    let mut rows = Vec::with_capacity(pred.len());
    let mut auto = Vec::with_capacity(pred.len());
    for (i, (p, g)) in pred.iter().zip(gt).enumerate() {
        let est = PoseEstimate { pred: *p, gt: *g, mesh, sym };
        auto.push(est.e_add_auto(true)?);
        rows.push(EvalRow {
            index: i,
            e_add: est.e_add()?,
            e_add_s: est.e_add_s()?,
            rot_err_deg: symmetric_angle_error(p, g, sym)?,
            trans_err_m: translation_error(p, g),
        });
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&EvalRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    let estimates: Vec<PoseEstimate<'_>> = pred.iter().zip(gt).map(|(p, g)| PoseEstimate { pred: *p, gt: *g, mesh, sym }).collect();
    let adds: Vec<f64> = rows.iter().map(|r| r.e_add_s).collect();
    let summary = EvalSummary {
        count: rows.len(),
        diameter: mesh.diameter(),
        mean_e_add: mean(|r| r.e_add),
        mean_e_add_s: mean(|r| r.e_add_s),
        recall_add_0_1d: add_recall(&estimates, ADD_THRESHOLD_FRAC, true)?,
        auc_add_s: auc(&adds, AUC_MAX_THRESHOLD)?,
        auc_add_or_s: auc(&auto, AUC_MAX_THRESHOLD)?,
        auc_max_threshold_m: AUC_MAX_THRESHOLD,
        mean_rot_err_deg: mean(|r| r.rot_err_deg),
    };
    Ok((rows, summary))
}

/// Writes `evaluation.csv` (per pose) and `evaluation.json` (aggregate).
pub fn cmd_evaluate(cfg: &RunConfig, pred_path: &Path, gt_path: &Path) -> Result<EvalSummary> {
    let mesh = cfg.load_mesh()?;
    let sym = cfg.load_symmetries()?;
    let pred = load_pose_lines(pred_path)?;
    let gt = load_pose_lines(gt_path)?;
    let (rows, summary) = evaluate_poses(&pred, &gt, &mesh, &sym)?;
    let mut csv = String::from("index,e_add,e_add_s,rot_err_deg,trans_err_m\n");
    for r in &rows {
        csv.push_str(&format!("{},{},{},{},{}\n", r.index, r.e_add, r.e_add_s, r.rot_err_deg, r.trans_err_m));
    }
    create_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("evaluation.csv"), csv)?;
    write(&cfg.out_dir.join("evaluation.json"), json(&summary)?)?;
    Ok(summary)
}

#[derive(Serialize)]
struct GradcheckTermJson {
    term: &'static str,
    median_rel_err: f64,
    max_rel_err: f64,
    components: usize,
    passed: bool,
}

#[derive(Serialize)]
struct GradcheckJson {
    passed: bool,
    median_tol: f64,
    max_tol: f64,
    terms: Vec<GradcheckTermJson>,
}

/// Runs the finite-difference suite and writes `gradcheck.csv` and `gradcheck.json`.
pub fn cmd_gradcheck(cfg: &RunConfig) -> Result<GradcheckReport> {
    let mesh = cfg.load_mesh()?;
    let sym = cfg.load_symmetries()?;
    let report = gradcheck::run(&mesh, &sym, &cfg.weights, &cfg.loss_options(), &cfg.render, &cfg.gradcheck)?;
    let mut csv = String::from("term,median_rel_err,max_rel_err,components,passed\n");
    for t in &report.terms {
        csv.push_str(&format!("{},{},{},{},{}\n", t.term.name(), t.median_rel_err, t.max_rel_err, t.components, t.passed));
    }
    let doc = GradcheckJson {
        passed: report.passed(),
        median_tol: cfg.gradcheck.median_tol,
        max_tol: cfg.gradcheck.max_tol,
        terms: report
            .terms
            .iter()
            .map(|t| GradcheckTermJson {
                term: t.term.name(),
                median_rel_err: t.median_rel_err,
                max_rel_err: t.max_rel_err,
                components: t.components,
                passed: t.passed,
            })
            .collect(),
    };
    create_dir(&cfg.out_dir)?;
    write(&cfg.out_dir.join("gradcheck.csv"), csv)?;
    write(&cfg.out_dir.join("gradcheck.json"), json(&doc)?)?;
    Ok(report)
}
