//! Self-supervision losses comparing a rendering at the current pose with a sensor frame and
//! pseudo labels.
//!
//! Image terms return cotangents with respect to the rendered color, depth and mask, which
//! [`grad_render`](crate::render::grad_render) maps onto the pose; the point-matching term
//! differentiates the pose directly. [`Objective`] caches everything that depends only on the
//! sensor side and assembles a [`LossReport`] per pose.

mod color;
mod mask;
mod perceptual;
mod points;
mod ssim;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use color::{ab_channels, lab_loss, srgb_to_lab, LabTarget};
pub use mask::{mask_loss, rwce, MaskHeads, MaskLoss, MaskTarget, RWCE_EPS};
pub use perceptual::{
    perceptual_loss, FeatureMap, FeaturePyramid, FilterBank, PerceptualTarget, FEATURE_EPS, FILTER_BANK_CHANNELS,
};
pub use points::{chamfer_loss, farthest_point_sample, pm_loss, ChamferTarget, PM_MAX_POINTS};
pub use ssim::{min_side as ms_ssim_min_side, ms_ssim_loss, scale_weights as ms_ssim_weights, MsSsimTarget};

use crate::error::{Error, Result};
use crate::geometry::{backproject, check_dims, DepthMap, Mask, Pose, RgbImage, SymmetrySet, TriMesh, MASK_THRESHOLD, POSE_DIM};
use crate::geometry::Camera;
use crate::linalg::{self, Vec3};
use crate::render::{grad_render, render, RenderConfig, RenderCotangents, RenderOutput};

/// A loss value together with its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Graded<G> {
    pub value: f64,
    pub grad: G,
}

/// Term weights `λ1..λ8` and the seed of the default perceptual filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Rendered mask vs pseudo mask.
    pub lambda1: f64,
    /// Predicted amodal mask vs amodal pseudo mask (diagnostic).
    pub lambda2: f64,
    /// Predicted visible mask vs visible pseudo mask (diagnostic).
    pub lambda3: f64,
    pub lambda4: f64,
    pub lambda5: f64,
    pub lambda6: f64,
    pub lambda7: f64,
    pub lambda8: f64,
    pub perceptual_seed: u64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            lambda4: 1.0,
            lambda5: 1.0,
            lambda6: 0.15,
            lambda7: 1.0,
            lambda8: 10.0,
            perceptual_seed: 0,
        }
    }
}

impl LossWeights {
    pub fn lambdas(&self) -> [f64; 8] {
        [
            self.lambda1,
            self.lambda2,
            self.lambda3,
            self.lambda4,
            self.lambda5,
            self.lambda6,
            self.lambda7,
            self.lambda8,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas().iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidConfig("loss weights must be finite and non-negative"));
        }
        Ok(())
    }

    /// Copy with every weight zeroed except the one of `term`.
    pub fn isolate(&self, term: Term) -> Self {
        let mut w = Self { perceptual_seed: self.perceptual_seed, ..Self::zero() };
        let l = self.weight(term);
        match term {
            Term::Mask => w.lambda1 = l,
            Term::HeadAmodal => w.lambda2 = l,
            Term::HeadVisible => w.lambda3 = l,
            Term::Ab => w.lambda4 = l,
            Term::MsSsim => w.lambda5 = l,
            Term::Perceptual => w.lambda6 = l,
            Term::PointMatching => w.lambda7 = l,
            Term::Chamfer => w.lambda8 = l,
        }
        w
    }

    pub fn zero() -> Self {
        Self {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            lambda4: 0.0,
            lambda5: 0.0,
            lambda6: 0.0,
            lambda7: 0.0,
            lambda8: 0.0,
            perceptual_seed: 0,
        }
    }

    pub fn weight(&self, term: Term) -> f64 {
        self.lambdas()[term as usize]
    }
}

/// The named loss terms, in weight order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Term {
    Mask = 0,
    HeadAmodal = 1,
    HeadVisible = 2,
    Ab = 3,
    MsSsim = 4,
    Perceptual = 5,
    PointMatching = 6,
    Chamfer = 7,
}

impl Term {
    pub const ALL: [Term; 8] = [
        Term::Mask,
        Term::HeadAmodal,
        Term::HeadVisible,
        Term::Ab,
        Term::MsSsim,
        Term::Perceptual,
        Term::PointMatching,
        Term::Chamfer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Mask => "mask",
            Term::HeadAmodal => "mask_head_amodal",
            Term::HeadVisible => "mask_head_vis",
            Term::Ab => "ab",
            Term::MsSsim => "ms_ssim",
            Term::Perceptual => "perceptual",
            Term::PointMatching => "pm",
            Term::Chamfer => "chamfer",
        }
    }

    /// Whether the term depends on the pose at all.
    pub fn has_pose_gradient(self) -> bool {
        !matches!(self, Term::HeadAmodal | Term::HeadVisible)
    }
}

/// Switches that select the variant of the objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossOptions {
    /// Drop the chamfer term and never touch sensor depth.
    pub rgb_only: bool,
    pub disentangle_pm: bool,
    pub mask_target: MaskTarget,
    pub ms_ssim_scales: usize,
    pub pm_points: usize,
}

impl Default for LossOptions {
    fn default() -> Self {
        Self {
            rgb_only: false,
            disentangle_pm: false,
            mask_target: MaskTarget::Amodal,
            ms_ssim_scales: 5,
            pm_points: PM_MAX_POINTS,
        }
    }
}

/// Pseudo pose and pseudo masks produced by a teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabels {
    pub pose: Pose,
    pub mask_vis: Mask,
    pub mask_amodal: Mask,
}

impl PseudoLabels {
    /// Checks that both masks agree in size and that the visible region lies inside the amodal one.
    pub fn new(pose: Pose, mask_vis: Mask, mask_amodal: Mask) -> Result<Self> {
        mask_vis.ensure_same_dims(&mask_amodal)?;
        let escapes = mask_vis
            .data
            .iter()
            .zip(&mask_amodal.data)
            .any(|(&v, &a)| v >= MASK_THRESHOLD && a < MASK_THRESHOLD);
        if escapes {
            return Err(Error::InvalidConfig("visible pseudo mask extends beyond the amodal mask"));
        }
        Ok(Self { pose, mask_vis, mask_amodal })
    }
}

/// Observed color, optional depth (meters, 0 = invalid) and intrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub color: RgbImage,
    pub depth: Option<DepthMap>,
    pub cam: Camera,
}

impl SensorFrame {
    pub fn new(color: RgbImage, depth: Option<DepthMap>, cam: Camera) -> Result<Self> {
        cam.validate()?;
        check_dims((cam.width, cam.height), color.dims())?;
        if let Some(d) = &depth {
            check_dims((cam.width, cam.height), d.dims())?;
            if d.data.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidConfig("sensor depth must be finite and non-negative"));
            }
        }
        Ok(Self { color, depth, cam })
    }
}

/// One reported term: its raw value and the weight it enters the total with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerm {
    pub term: Term,
    pub raw: f64,
    pub weight: f64,
}

impl LossTerm {
    pub fn weighted(&self) -> f64 {
        self.raw * self.weight
    }
}

/// Named terms, their weighted total and the gradient of the total with respect to the pose.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub terms: Vec<LossTerm>,
    pub total: f64,
    pub grad: [f64; POSE_DIM],
    /// Terms skipped at this pose, with the reason.
    pub dropped: Vec<(Term, Error)>,
}

impl LossReport {
    pub fn get(&self, term: Term) -> Option<&LossTerm> {
        self.terms.iter().find(|t| t.term == term)
    }

    /// Comma-separated term names, matching [`LossReport::csv_row`].
    pub fn csv_header(&self) -> String {
        let mut s = String::from("total");
        for t in &self.terms {
            s.push_str(",term:");
            s.push_str(t.term.name());
        }
        s
    }

    /// Total followed by the weighted value of every term.
    pub fn csv_row(&self) -> String {
        let mut s = format!("{:e}", self.total);
        for t in &self.terms {
            s.push_str(&format!(",{:e}", t.weighted()));
        }
        s
    }
}

/// Terms and gradients from one family of losses at a fixed pose.
#[derive(Debug, Clone)]
pub struct PartialLoss {
    pub terms: Vec<LossTerm>,
    pub cotangents: RenderCotangents,
    /// Gradient contributions that bypass the renderer.
    pub direct_grad: [f64; POSE_DIM],
    pub dropped: Vec<(Term, Error)>,
}

impl PartialLoss {
    fn new(out: &RenderOutput) -> Self {
        Self { terms: Vec::new(), cotangents: out.zero_cotangents(), direct_grad: [0.0; POSE_DIM], dropped: Vec::new() }
    }

    pub fn value(&self) -> f64 {
        self.terms.iter().map(LossTerm::weighted).sum()
    }
}

/// Result of evaluating the objective at one pose.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: LossReport,
    pub render: RenderOutput,
}

/// The full self-supervised objective for one frame, with sensor-side quantities cached.
pub struct Objective {
    mesh: TriMesh,
    pseudo: PseudoLabels,
    heads: Option<MaskHeads>,
    sym: SymmetrySet,
    weights: LossWeights,
    opts: LossOptions,
    render_cfg: RenderConfig,
    cam: Camera,
    /// `None` when the term is disabled; the error when `Pos(mask_vis)` is empty.
    lab: Option<Result<LabTarget>>,
    ms_ssim: Option<MsSsimTarget>,
    extractor: Box<dyn FeaturePyramid + Send + Sync>,
    perceptual: Option<PerceptualTarget>,
    chamfer: Option<ChamferTarget>,
    pm_points: Vec<Vec3>,
}

impl core::fmt::Debug for Objective {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Objective").field("weights", &self.weights).field("opts", &self.opts).finish_non_exhaustive()
    }
}

/// Everything the objective is built from.
#[derive(Debug, Clone, Copy)]
pub struct ObjectiveInputs<'a> {
    pub mesh: &'a TriMesh,
    pub sensor: &'a SensorFrame,
    pub pseudo: &'a PseudoLabels,
    pub heads: Option<&'a MaskHeads>,
    pub sym: &'a SymmetrySet,
    pub weights: &'a LossWeights,
    pub opts: &'a LossOptions,
    pub render_cfg: &'a RenderConfig,
}

impl Objective {
    /// Builds the objective with the seeded [`FilterBank`] as perceptual extractor.
    pub fn new(inputs: ObjectiveInputs<'_>) -> Result<Self> {
        let bank = FilterBank::new(inputs.weights.perceptual_seed);
        Self::with_extractor(inputs, Box::new(bank))
    }

    pub fn with_extractor(inputs: ObjectiveInputs<'_>, extractor: Box<dyn FeaturePyramid + Send + Sync>) -> Result<Self> {
        let ObjectiveInputs { mesh, sensor, pseudo, heads, sym, weights, opts, render_cfg } = inputs;
        weights.validate()?;
        render_cfg.validate()?;
        let cam = sensor.cam;
        let dims = (cam.width, cam.height);
        check_dims(dims, pseudo.mask_vis.dims())?;
        if let Some(h) = heads {
            check_dims(dims, h.vis.dims())?;
            check_dims(dims, h.amodal.dims())?;
        }
        if opts.pm_points == 0 {
            return Err(Error::InvalidConfig("pm_points must be positive"));
        }
        let masked_sensor = sensor.color.masked(&pseudo.mask_vis)?;
        let lab = (weights.lambda4 > 0.0).then(|| LabTarget::new(&sensor.color, &pseudo.mask_vis));
        let ms_ssim = if weights.lambda5 > 0.0 {
            Some(MsSsimTarget::new(&masked_sensor, opts.ms_ssim_scales)?)
        } else {
            None
        };
        let perceptual = (weights.lambda6 > 0.0).then(|| PerceptualTarget::new(&masked_sensor, extractor.as_ref()));
        let chamfer = if !opts.rgb_only && weights.lambda8 > 0.0 {
            let depth = sensor.depth.as_ref().ok_or(Error::MissingDepth)?;
            let cloud = backproject(depth, &pseudo.mask_vis, &cam)?;
            Some(ChamferTarget::new(&cloud.points)?)
        } else {
            None
        };
        let pm_points = farthest_point_sample(mesh.vertices(), opts.pm_points);
        Ok(Self {
            mesh: mesh.clone(),
            pseudo: pseudo.clone(),
            heads: heads.cloned(),
            sym: sym.clone(),
            weights: *weights,
            opts: *opts,
            render_cfg: *render_cfg,
            cam,
            lab,
            ms_ssim,
            extractor,
            perceptual,
            chamfer,
            pm_points,
        })
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn options(&self) -> &LossOptions {
        &self.opts
    }

    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    pub fn camera(&self) -> &Camera {
        &self.cam
    }

    pub fn pseudo(&self) -> &PseudoLabels {
        &self.pseudo
    }

    pub fn render_config(&self) -> &RenderConfig {
        &self.render_cfg
    }

    /// Terms that can appear in a report: positive weight, and chamfer only with depth.
    pub fn enabled_terms(&self) -> Vec<Term> {
        Term::ALL
            .into_iter()
            .filter(|&t| self.weights.weight(t) > 0.0)
            .filter(|&t| !matches!(t, Term::HeadAmodal | Term::HeadVisible) || self.heads.is_some())
            .filter(|&t| t != Term::Chamfer || !self.opts.rgb_only)
            .collect()
    }

    fn mask_target(&self) -> &Mask {
        match self.opts.mask_target {
            MaskTarget::Amodal => &self.pseudo.mask_amodal,
            MaskTarget::Visible => &self.pseudo.mask_vis,
        }
    }

    /// Mask, color, structural and perceptual terms.
    pub fn visual(&self, out: &RenderOutput) -> Result<PartialLoss> {
        check_dims((self.cam.width, self.cam.height), out.dims())?;
        let w = &self.weights;
        let mut acc = PartialLoss::new(out);
        if w.lambda1 > 0.0 {
            match rwce(self.mask_target(), &out.mask) {
                Ok(g) => {
                    acc.terms.push(LossTerm { term: Term::Mask, raw: g.value, weight: w.lambda1 });
                    for (c, v) in acc.cotangents.mask.iter_mut().zip(&g.grad) {
                        *c += w.lambda1 * v;
                    }
                }
                Err(e @ Error::EmptyRegion(_)) => acc.dropped.push((Term::Mask, e)),
                Err(e) => return Err(e),
            }
        }
        if let Some(h) = &self.heads {
            for (term, lambda, pseudo, pred) in [
                (Term::HeadAmodal, w.lambda2, &self.pseudo.mask_amodal, &h.amodal),
                (Term::HeadVisible, w.lambda3, &self.pseudo.mask_vis, &h.vis),
            ] {
                if lambda > 0.0 {
                    match rwce(pseudo, pred) {
                        Ok(g) => acc.terms.push(LossTerm { term, raw: g.value, weight: lambda }),
                        Err(e @ Error::EmptyRegion(_)) => acc.dropped.push((term, e)),
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        if let Some(target) = &self.lab {
            match target.as_ref().map_err(Clone::clone).and_then(|t| t.loss(&out.color)) {
                Ok(g) => {
                    acc.terms.push(LossTerm { term: Term::Ab, raw: g.value, weight: w.lambda4 });
                    add_color(&mut acc.cotangents, &g.grad, w.lambda4);
                }
                Err(e @ Error::EmptyRegion(_)) => acc.dropped.push((Term::Ab, e)),
                Err(e) => return Err(e),
            }
        }
        if let Some(target) = &self.ms_ssim {
            let g = target.loss(&out.color)?;
            acc.terms.push(LossTerm { term: Term::MsSsim, raw: g.value, weight: w.lambda5 });
            add_color(&mut acc.cotangents, &g.grad, w.lambda5);
        }
        if let Some(target) = &self.perceptual {
            let g = target.loss(&out.color, self.extractor.as_ref())?;
            acc.terms.push(LossTerm { term: Term::Perceptual, raw: g.value, weight: w.lambda6 });
            add_color(&mut acc.cotangents, &g.grad, w.lambda6);
        }
        Ok(acc)
    }

    /// Point-matching and, unless RGB-only, chamfer terms.
    pub fn geometric(&self, pose: &Pose, out: &RenderOutput) -> Result<PartialLoss> {
        let w = &self.weights;
        let mut acc = PartialLoss::new(out);
        if w.lambda7 > 0.0 {
            let g = pm_loss(pose, &self.pseudo.pose, &self.pm_points, &self.sym, self.opts.disentangle_pm)?;
            acc.terms.push(LossTerm { term: Term::PointMatching, raw: g.value, weight: w.lambda7 });
            for (a, b) in acc.direct_grad.iter_mut().zip(&g.grad) {
                *a += w.lambda7 * b;
            }
        }
        if let Some(target) = &self.chamfer {
            let cloud = backproject(&out.depth, &out.mask, &self.cam)?;
            let g = target.loss(&cloud.points)?;
            acc.terms.push(LossTerm { term: Term::Chamfer, raw: g.value, weight: w.lambda8 });
            for (&pix, gp) in cloud.pixels.iter().zip(&g.grad) {
                let ray = self.cam.ray(pix % self.cam.width, pix / self.cam.width);
                acc.cotangents.depth[pix] += w.lambda8 * linalg::dot(*gp, ray);
            }
        }
        Ok(acc)
    }

    /// Renders at `pose` and evaluates every enabled term with the pose gradient of the total.
    pub fn evaluate(&self, pose: &Pose) -> Result<Evaluation> {
        let out = render(&self.mesh, pose, &self.cam, &self.render_cfg)?;
        let report = self.evaluate_rendered(pose, &out)?;
        Ok(Evaluation { report, render: out })
    }

    /// Like [`Objective::evaluate`] for a rendering the caller already holds.
    pub fn evaluate_rendered(&self, pose: &Pose, out: &RenderOutput) -> Result<LossReport> {
        let visual = self.visual(out)?;
        let geometric = self.geometric(pose, out)?;
        let mut cot = visual.cotangents;
        cot.add_assign(&geometric.cotangents, 1.0);
        let g_render = grad_render(out, &cot)?;
        let mut grad = [0.0; POSE_DIM];
        for k in 0..POSE_DIM {
            grad[k] = g_render[k] + geometric.direct_grad[k];
        }
        let mut terms = visual.terms;
        terms.extend(geometric.terms);
        terms.sort_by_key(|t| t.term);
        let weighted: Vec<f64> = terms.iter().map(LossTerm::weighted).collect();
        let mut dropped = visual.dropped;
        dropped.extend(geometric.dropped);
        Ok(LossReport { terms, total: linalg::pairwise_sum(&weighted), grad, dropped })
    }
}

fn add_color(cot: &mut RenderCotangents, grad: &[Vec3], weight: f64) {
    for (c, g) in cot.color.iter_mut().zip(grad) {
        *c = linalg::add(*c, linalg::scale(*g, weight));
    }
}

/// One-shot evaluation of the full objective at `pose`.
pub fn self_loss(inputs: ObjectiveInputs<'_>, pose: &Pose) -> Result<LossReport> {
    Ok(Objective::new(inputs)?.evaluate(pose)?.report)
}
