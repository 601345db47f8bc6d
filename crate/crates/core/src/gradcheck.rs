//! Central finite-difference checks of every loss term's analytic pose gradient.

use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{Camera, Pose, SymmetrySet, TriMesh, POSE_DIM};
use crate::linalg;
use crate::losses::{LossOptions, LossWeights, Objective, ObjectiveInputs, Term};
use crate::render::RenderConfig;
use crate::scene::{perturb_pose, synthesize, MeshSpec, SceneSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckConfig {
    /// Number of seeded pose/camera configurations per term.
    pub configs: usize,
    pub resolution: usize,
    /// Image side and scale count used for the MS-SSIM term.
    pub ms_ssim_resolution: usize,
    pub ms_ssim_scales: usize,
    /// Central-difference step for all nine parameters. The L1 color term has per-pixel kinks
    /// that a wider stencil straddles.
    pub step: f64,
    /// Step for the chamfer term, whose nearest-neighbour assignments and binarized
    /// silhouette make it only piecewise smooth.
    pub chamfer_step: f64,
    pub median_tol: f64,
    pub max_tol: f64,
    /// Components where both gradients are below this magnitude are skipped.
    pub magnitude_floor: f64,
    /// Offset of the evaluated pose from the pseudo pose.
    pub offset_rot_deg: f64,
    pub offset_trans_frac: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            configs: 10,
            resolution: 64,
            ms_ssim_resolution: 256,
            ms_ssim_scales: 3,
            step: 1e-5,
            chamfer_step: 1e-6,
            median_tol: 0.02,
            max_tol: 0.10,
            magnitude_floor: 1e-6,
            offset_rot_deg: 6.0,
            offset_trans_frac: 0.03,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermCheck {
    pub term: Term,
    pub median_rel_err: f64,
    pub max_rel_err: f64,
    /// Gradient components compared.
    pub components: usize,
    /// The worst component: configuration, parameter, analytic and numeric value.
    pub worst: Option<WorstComponent>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstComponent {
    pub config: usize,
    pub param: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub terms: Vec<TermCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.terms.iter().all(|t| t.passed)
    }
}

/// `|a - b| / max(|a|, |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Central differences of the objective's total at `pose`, one per pose parameter.
pub fn finite_difference(objective: &Objective, pose: &Pose, step: f64) -> Result<[f64; POSE_DIM]> {
    let base = pose.params();
    let mut g = [0.0; POSE_DIM];
    for k in 0..POSE_DIM {
        let mut plus = base;
        let mut minus = base;
        plus[k] += step;
        minus[k] -= step;
        let fp = objective.evaluate(&Pose::from_params(&plus))?.report.total;
        let fm = objective.evaluate(&Pose::from_params(&minus))?.report.total;
        g[k] = (fp - fm) / (2.0 * step);
    }
    Ok(g)
}

/// Relative errors of the analytic against the finite-difference gradient, skipping
/// components where both are below `floor`.
pub fn compare(analytic: &[f64; POSE_DIM], numeric: &[f64; POSE_DIM], floor: f64) -> Vec<f64> {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, n)| a.abs() > floor || n.abs() > floor)
        .map(|(&a, &n)| relative_error(a, n))
        .collect()
}

struct Case {
    spec: SceneSpec,
    pose: Pose,
}

fn case(mesh: &TriMesh, cfg: &GradcheckConfig, index: usize, resolution: usize) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(0x1000_0000_01b3).wrapping_add(index as u64));
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let angle = rng.random_range(0.0..core::f64::consts::PI);
    let scale = mesh.diameter() / 3f64.sqrt();
    let t = [
        rng.random_range(-0.3..0.3) * scale,
        rng.random_range(-0.3..0.3) * scale,
        rng.random_range(3.5..5.0) * scale,
    ];
    let res = resolution as f64;
    let f = rng.random_range(60.0..90.0) * res / 64.0;
    let c = res / 2.0 + rng.random_range(-3.0..3.0) * res / 64.0;
    let cam = Camera::new(f, f, c, c, resolution, resolution)?;
    let gt = Pose::from_rt(&linalg::axis_angle(axis, angle), t);
    let pose = perturb_pose(&gt, cfg.offset_rot_deg, cfg.offset_trans_frac, mesh.diameter(), rng.random())?;
    let spec = SceneSpec {
        mesh: MeshSpec::Loaded { path: alloc::string::String::new() },
        face_coloring: crate::primitives::FaceColoring::DistinctFaces,
        gt_pose: gt,
        cam,
        noise: Default::default(),
        occluder: None,
        occluder_color: [0.45, 0.4, 0.35],
        pseudo_perturbation: Default::default(),
        seed: index as u64,
    };
    Ok(Case { spec, pose })
}

/// Checks every pose-dependent term enabled by `weights` and `opts` over `cfg.configs`
/// seeded configurations of `mesh`.
pub fn run(
    mesh: &TriMesh,
    sym: &SymmetrySet,
    weights: &LossWeights,
    opts: &LossOptions,
    rcfg: &RenderConfig,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport> {
    let terms: Vec<Term> = Term::ALL
        .into_iter()
        .filter(|t| t.has_pose_gradient() && weights.weight(*t) > 0.0)
        .filter(|t| *t != Term::Chamfer || !opts.rgb_only)
        .collect();
    let mut out = Vec::new();
    for term in terms {
        let (resolution, term_opts) = if term == Term::MsSsim {
            (cfg.ms_ssim_resolution, LossOptions { ms_ssim_scales: cfg.ms_ssim_scales, ..*opts })
        } else {
            (cfg.resolution, *opts)
        };
        let w = weights.isolate(term);
        let mut errors = Vec::new();
        let mut worst: Option<(f64, WorstComponent)> = None;
        for i in 0..cfg.configs {
            let Case { spec, pose } = case(mesh, cfg, i, resolution)?;
            let scene = synthesize(mesh, &spec, rcfg)?;
            let objective = Objective::new(ObjectiveInputs {
                mesh,
                sensor: &scene.sensor,
                pseudo: &scene.pseudo,
                heads: None,
                sym,
                weights: &w,
                opts: &term_opts,
                render_cfg: rcfg,
            })?;
            let analytic = objective.evaluate(&pose)?.report.grad;
            let step = if term == Term::Chamfer { cfg.chamfer_step } else { cfg.step };
            let numeric = finite_difference(&objective, &pose, step)?;
            for k in 0..POSE_DIM {
                let (a, n) = (analytic[k], numeric[k]);
                if a.abs() <= cfg.magnitude_floor && n.abs() <= cfg.magnitude_floor {
                    continue;
                }
                let e = relative_error(a, n);
                errors.push(e);
                if worst.is_none_or(|(w, _)| e > w) {
                    worst = Some((e, WorstComponent { config: i, param: k, analytic: a, numeric: n }));
                }
            }
        }
        errors.sort_by(f64::total_cmp);
        let median = errors.get(errors.len() / 2).copied().unwrap_or(0.0);
        let max = errors.last().copied().unwrap_or(0.0);
        out.push(TermCheck {
            term,
            median_rel_err: median,
            max_rel_err: max,
            components: errors.len(),
            worst: worst.map(|(_, w)| w),
            passed: !errors.is_empty() && median <= cfg.median_tol && max <= cfg.max_tol,
        });
    }
    Ok(GradcheckReport { terms: out })
}
