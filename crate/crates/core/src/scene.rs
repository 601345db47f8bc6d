//! Seeded synthetic frames with pseudo labels for exercising the refinement pipeline.

use alloc::string::String;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Pose, RgbImage, TriMesh, MASK_THRESHOLD};
use crate::linalg;
use crate::losses::{PseudoLabels, SensorFrame};
use crate::primitives::{icosphere, unit_cube, FaceColoring};
use crate::render::{render, RenderConfig, RenderOutput};

/// Where the scene's mesh comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeshSpec {
    UnitCube,
    Icosphere { subdivisions: u32, radius: f64 },
    /// OBJ file; resolved by the caller, since this crate does no I/O.
    Loaded { path: String },
}

impl MeshSpec {
    /// Builds a built-in mesh, `None` for [`MeshSpec::Loaded`].
    pub fn build_builtin(&self, coloring: FaceColoring) -> Option<Result<TriMesh>> {
        match self {
            MeshSpec::UnitCube => Some(unit_cube(coloring)),
            MeshSpec::Icosphere { subdivisions, radius } => Some(icosphere(*radius, *subdivisions, coloring)),
            MeshSpec::Loaded { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoise {
    /// Standard deviation of additive color noise.
    pub color_std: f64,
    /// Standard deviation of additive depth noise, meters.
    pub depth_std: f64,
    /// Fraction of valid depth pixels zeroed at random.
    pub dropout_frac: f64,
}

/// Rotation angle and translation distance applied by [`perturb_pose`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Perturbation {
    pub rot_deg: f64,
    /// Translation offset as a fraction of the object diameter.
    pub trans_frac: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub mesh: MeshSpec,
    #[serde(default = "default_coloring")]
    pub face_coloring: FaceColoring,
    pub gt_pose: Pose,
    pub cam: Camera,
    #[serde(default)]
    pub noise: SensorNoise,
    /// Fraction of image columns, counted from the left, hidden by the occluder.
    #[serde(default)]
    pub occluder: Option<f64>,
    /// Flat color painted over the occluded columns.
    #[serde(default = "default_occluder_color")]
    pub occluder_color: linalg::Vec3,
    /// Error injected into the pseudo pose.
    #[serde(default)]
    pub pseudo_perturbation: Perturbation,
    #[serde(default)]
    pub seed: u64,
}

fn default_coloring() -> FaceColoring {
    FaceColoring::DistinctFaces
}

fn default_occluder_color() -> linalg::Vec3 {
    [0.45, 0.4, 0.35]
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.cam.validate()?;
        let n = &self.noise;
        if !(n.color_std >= 0.0 && n.depth_std >= 0.0) || !(0.0..1.0).contains(&n.dropout_frac) {
            return Err(Error::InvalidConfig("noise parameters must be non-negative, dropout below 1"));
        }
        if let Some(f) = self.occluder {
            if !(0.0..1.0).contains(&f) {
                return Err(Error::InvalidConfig("occluder fraction must lie in [0, 1)"));
            }
        }
        let p = &self.pseudo_perturbation;
        if !(p.rot_deg >= 0.0 && p.trans_frac >= 0.0) {
            return Err(Error::InvalidConfig("pseudo perturbation must be non-negative"));
        }
        if !self.gt_pose.is_finite() {
            return Err(Error::InvalidConfig("ground-truth pose must be finite"));
        }
        Ok(())
    }

    /// Number of image columns covered by the occluder band.
    pub fn occluded_columns(&self) -> usize {
        self.occluder.map_or(0, |f| (f * self.cam.width as f64).floor() as usize)
    }
}

/// A synthesized frame with its labels and the clean rendering at the ground-truth pose.
#[derive(Debug, Clone)]
pub struct Scene {
    pub sensor: SensorFrame,
    pub pseudo: PseudoLabels,
    pub gt: Pose,
    pub clean: RenderOutput,
}

/// Renders `mesh` at the ground-truth pose and derives a noisy sensor frame and pseudo labels.
pub fn synthesize(mesh: &TriMesh, spec: &SceneSpec, rcfg: &RenderConfig) -> Result<Scene> {
    spec.validate()?;
    let gt = spec.gt_pose.canonical()?;
    let clean = render(mesh, &gt, &spec.cam, rcfg)?;
    let amodal = clean.mask.binarized(MASK_THRESHOLD);
    if amodal.data.iter().all(|&v| v == 0.0) {
        return Err(Error::EmptyRendering);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (w, h) = (spec.cam.width, spec.cam.height);

    let mut color: RgbImage = clean.color.clone();
    if spec.noise.color_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise.color_std).map_err(|_| Error::InvalidConfig("color noise"))?;
        for px in &mut color.data {
            for c in px.iter_mut() {
                *c = (*c + normal.sample(&mut rng)).clamp(0.0, 1.0);
            }
        }
    }
    let mut depth = clean.hard_depth.clone();
    if spec.noise.depth_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise.depth_std).map_err(|_| Error::InvalidConfig("depth noise"))?;
        for d in depth.data.iter_mut().filter(|d| **d > 0.0) {
            *d = (*d + normal.sample(&mut rng)).max(0.0);
        }
    }
    if spec.noise.dropout_frac > 0.0 {
        for d in depth.data.iter_mut().filter(|d| **d > 0.0) {
            if rng.random::<f64>() < spec.noise.dropout_frac {
                *d = 0.0;
            }
        }
    }

    let mut vis = amodal.clone();
    let band = spec.occluded_columns();
    for row in 0..h {
        for col in 0..band.min(w) {
            let i = row * w + col;
            vis.data[i] = 0.0;
            color.data[i] = spec.occluder_color;
            depth.data[i] = 0.0;
        }
    }

    let p = spec.pseudo_perturbation;
    let pseudo_pose = perturb_pose(&gt, p.rot_deg, p.trans_frac, mesh.diameter(), spec.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let sensor = SensorFrame::new(color, Some(depth), spec.cam)?;
    let pseudo = PseudoLabels::new(pseudo_pose, vis, amodal)?;
    Ok(Scene { sensor, pseudo, gt, clean })
}

/// Applies a seeded rotation of exactly `rot_deg` degrees about a random camera-frame axis
/// (`R ↦ R_δ R`) and a seeded translation of exactly `trans_frac · diameter` meters.
pub fn perturb_pose(pose: &Pose, rot_deg: f64, trans_frac: f64, diameter: f64, seed: u64) -> Result<Pose> {
    if !(rot_deg >= 0.0 && trans_frac >= 0.0) {
        return Err(Error::InvalidConfig("perturbation magnitudes must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let r_delta = linalg::axis_angle(axis, rot_deg.to_radians());
    pose.rotation()?;
    // Gram-Schmidt commutes with rotations, so rotating both 6D vectors applies R_δ exactly
    let a = linalg::mat_vec(&r_delta, [pose.rot6[0], pose.rot6[1], pose.rot6[2]]);
    let b = linalg::mat_vec(&r_delta, [pose.rot6[3], pose.rot6[4], pose.rot6[5]]);
    let t = linalg::add(pose.trans, linalg::scale(dir, trans_frac * diameter));
    Ok(Pose { rot6: [a[0], a[1], a[2], b[0], b[1], b[2]], trans: t })
}
