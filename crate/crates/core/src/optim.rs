//! Gradient-based pose refinement against the self-supervised objective, plus the EMA
//! parameter update.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{matrix_to_rot6, rot6_to_matrix, Pose, POSE_DIM};
use crate::losses::{Evaluation, Objective, Term};
use crate::metrics::{miou, rotation_angle_error, translation_error};
use crate::render::render;

/// Minimum IoU (as a fraction) between the initial rendering and the visible pseudo mask.
pub const MIN_INITIAL_IOU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    GradientDescent,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub rot6: f64,
    /// Translation step as a fraction of the object diameter.
    pub trans_per_diameter: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self { rot6: 1e-2, trans_per_diameter: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub max_iters: usize,
    pub learning_rates: LearningRates,
    pub optimizer: OptimizerKind,
    /// Relative improvement of the best loss below which an iteration counts as stalled.
    pub convergence_tol: f64,
    /// Consecutive stalled iterations that end the run.
    pub patience: usize,
    /// Trace every `log_every`-th iteration (the first and last are always traced).
    pub log_every: usize,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            learning_rates: LearningRates::default(),
            optimizer: OptimizerKind::default(),
            convergence_tol: 1e-5,
            patience: 20,
            log_every: 1,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1"));
        }
        let lr = self.learning_rates;
        if !(lr.rot6 > 0.0 && lr.trans_per_diameter > 0.0 && lr.rot6.is_finite() && lr.trans_per_diameter.is_finite()) {
            return Err(Error::InvalidConfig("learning rates must be positive"));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps } = self.optimizer {
            if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) {
                return Err(Error::InvalidConfig("Adam betas must lie in (0, 1)"));
            }
            if !(eps > 0.0) {
                return Err(Error::InvalidConfig("Adam epsilon must be positive"));
            }
        }
        if !(self.convergence_tol >= 0.0) || self.patience == 0 || self.log_every == 0 {
            return Err(Error::InvalidConfig("convergence_tol, patience and log_every must be positive"));
        }
        Ok(())
    }
}

/// One traced iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub total: f64,
    /// Weighted value of every reported term.
    pub terms: Vec<(Term, f64)>,
    pub rot_err_deg: Option<f64>,
    pub trans_err_m: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// CSV with columns `iter,total,term:*,rot_err_deg,trans_err_m`; missing values are empty.
    pub fn to_csv(&self) -> String {
        let mut terms: Vec<Term> = Vec::new();
        for r in &self.records {
            for (t, _) in &r.terms {
                if !terms.contains(t) {
                    terms.push(*t);
                }
            }
        }
        terms.sort();
        let mut s = String::from("iter,total");
        for t in &terms {
            s.push_str(",term:");
            s.push_str(t.name());
        }
        s.push_str(",rot_err_deg,trans_err_m\n");
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
        for r in &self.records {
            s.push_str(&format!("{},{}", r.iter, r.total));
            for t in &terms {
                s.push(',');
                if let Some((_, v)) = r.terms.iter().find(|(u, _)| u == t) {
                    s.push_str(&format!("{v}"));
                }
            }
            s.push_str(&format!(",{},{}\n", opt(r.rot_err_deg), opt(r.trans_err_m)));
        }
        s
    }
}

/// Outcome of a refinement run.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    /// Pose with the lowest total loss seen.
    pub best: Pose,
    pub best_loss: f64,
    pub best_iter: usize,
    pub initial_loss: f64,
    /// Last pose whose loss was evaluated.
    pub last: Pose,
    pub iterations: usize,
    /// True when the run stopped on the patience rule rather than the iteration cap.
    pub converged: bool,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RefineError {
    /// The initial rendering barely overlaps the visible pseudo mask (IoU as a fraction).
    NoOverlap { iou: f64 },
    /// A NaN or infinite loss or gradient; `partial` holds the run up to the last finite pose.
    NonFiniteLoss { partial: Box<Refinement> },
    Loss(Error),
}

impl fmt::Display for RefineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefineError::NoOverlap { iou } => {
                write!(f, "initial pose does not overlap the pseudo mask (IoU {iou:.4} < {MIN_INITIAL_IOU})")
            }
            RefineError::NonFiniteLoss { partial } => {
                write!(f, "non-finite loss after {} iterations", partial.iterations)
            }
            RefineError::Loss(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for RefineError {}

impl From<Error> for RefineError {
    fn from(e: Error) -> Self {
        RefineError::Loss(e)
    }
}

struct Stepper {
    kind: OptimizerKind,
    lr: [f64; POSE_DIM],
    m: [f64; POSE_DIM],
    v: [f64; POSE_DIM],
    t: i32,
}

impl Stepper {
    fn new(cfg: &OptimConfig, diameter: f64) -> Self {
        let mut lr = [cfg.learning_rates.rot6; POSE_DIM];
        for l in &mut lr[6..] {
            *l = cfg.learning_rates.trans_per_diameter * diameter;
        }
        Self { kind: cfg.optimizer, lr, m: [0.0; POSE_DIM], v: [0.0; POSE_DIM], t: 0 }
    }

    fn step(&mut self, params: &mut [f64; POSE_DIM], grad: &[f64; POSE_DIM]) {
        match self.kind {
            OptimizerKind::GradientDescent => {
                for k in 0..POSE_DIM {
                    params[k] -= self.lr[k] * grad[k];
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for k in 0..POSE_DIM {
                    self.m[k] = beta1 * self.m[k] + (1.0 - beta1) * grad[k];
                    self.v[k] = beta2 * self.v[k] + (1.0 - beta2) * grad[k] * grad[k];
                    let m_hat = self.m[k] / c1;
                    let v_hat = self.v[k] / c2;
                    params[k] -= self.lr[k] * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Re-orthonormalizes the rotation part so the 6D parameters stay well conditioned.
fn renormalize(params: &mut [f64; POSE_DIM]) -> Result<()> {
    let r6: [f64; 6] = params[..6].try_into().expect("six rotation parameters");
    let r = rot6_to_matrix(&r6)?;
    params[..6].copy_from_slice(&matrix_to_rot6(&r));
    Ok(())
}

fn record(iter: usize, eval: &Evaluation, pose: &Pose, gt: Option<&Pose>) -> Result<TraceRecord> {
    let (rot_err_deg, trans_err_m) = match gt {
        Some(g) => (Some(rotation_angle_error(pose, g)?), Some(translation_error(pose, g))),
        None => (None, None),
    };
    Ok(TraceRecord {
        iter,
        total: eval.report.total,
        terms: eval.report.terms.iter().map(|t| (t.term, t.weighted())).collect(),
        rot_err_deg,
        trans_err_m,
    })
}

/// Minimizes the objective over the pose starting from `init`. See [`refine_with`].
pub fn refine(init: &Pose, objective: &Objective, cfg: &OptimConfig, gt: Option<&Pose>) -> core::result::Result<Refinement, RefineError> {
    refine_with(init, objective, cfg, gt, &mut |_, _, _| {})
}

/// Runs the optimizer for at most `max_iters` loss evaluations and returns the best iterate.
/// `on_iter` sees every evaluated pose with its rendering and report.
pub fn refine_with(
    init: &Pose,
    objective: &Objective,
    cfg: &OptimConfig,
    gt: Option<&Pose>,
    on_iter: &mut dyn FnMut(usize, &Pose, &Evaluation),
) -> core::result::Result<Refinement, RefineError> {
    cfg.validate()?;
    let init = init.canonical()?;
    let out = render(objective.mesh(), &init, objective.camera(), objective.render_config())?;
    let iou = miou(&out.mask, &objective.pseudo().mask_vis)? / 100.0;
    if iou < MIN_INITIAL_IOU {
        return Err(RefineError::NoOverlap { iou });
    }
    let first = Evaluation { report: objective.evaluate_rendered(&init, &out)?, render: out };

    let mut stepper = Stepper::new(cfg, objective.mesh().diameter());
    let mut params = init.params();
    let mut run = Refinement {
        best: init,
        best_loss: f64::INFINITY,
        best_iter: 0,
        initial_loss: first.report.total,
        last: init,
        iterations: 0,
        converged: false,
        trace: Trace::default(),
    };
    let mut stalled = 0;
    let mut eval = first;
    for iter in 0..cfg.max_iters {
        if iter > 0 {
            eval = objective.evaluate(&Pose::from_params(&params))?;
        }
        let pose = Pose::from_params(&params);
        let report = &eval.report;
        if !report.total.is_finite() || report.grad.iter().any(|g| !g.is_finite()) {
            return Err(RefineError::NonFiniteLoss { partial: Box::new(run) });
        }
        on_iter(iter, &pose, &eval);
        run.iterations = iter + 1;
        run.last = pose;
        let is_last = iter + 1 == cfg.max_iters;
        if iter % cfg.log_every == 0 || is_last {
            run.trace.records.push(record(iter, &eval, &pose, gt)?);
        }

        if report.total < run.best_loss {
            let gain = if run.best_loss.is_finite() {
                (run.best_loss - report.total) / run.best_loss.abs().max(f64::MIN_POSITIVE)
            } else {
                f64::INFINITY
            };
            stalled = if gain < cfg.convergence_tol { stalled + 1 } else { 0 };
            run.best = pose;
            run.best_loss = report.total;
            run.best_iter = iter;
        } else {
            stalled += 1;
        }
        if stalled >= cfg.patience {
            run.converged = true;
            if iter % cfg.log_every != 0 && !is_last {
                run.trace.records.push(record(iter, &eval, &pose, gt)?);
            }
            break;
        }
        if !is_last {
            stepper.step(&mut params, &report.grad);
            renormalize(&mut params)?;
        }
    }
    Ok(run)
}

/// `momentum · teacher + (1 - momentum) · student`, elementwise.
pub fn ema_update(teacher: &[f64], student: &[f64], momentum: f64) -> Result<Vec<f64>> {
    if teacher.len() != student.len() {
        return Err(Error::LengthMismatch { left: teacher.len(), right: student.len() });
    }
    if !(0.0..=1.0).contains(&momentum) {
        return Err(Error::InvalidConfig("EMA momentum must lie in [0, 1]"));
    }
    Ok(teacher.iter().zip(student).map(|(t, s)| momentum * t + (1.0 - momentum) * s).collect())
}
