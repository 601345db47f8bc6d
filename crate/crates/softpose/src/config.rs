//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softpose_core::gradcheck::GradcheckConfig;
use softpose_core::losses::{LossOptions, LossWeights};
use softpose_core::optim::OptimConfig;
use softpose_core::primitives::FaceColoring;
use softpose_core::scene::{MeshSpec, Perturbation, SceneSpec, SensorNoise};
use softpose_core::{Camera, Pose, RenderConfig, SymmetrySet, TriMesh};

use crate::error::ConfigError;
use crate::obj::load_obj;
use crate::pose_io::{load_symmetries, PoseRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSpec,
    #[serde(default = "default_coloring")]
    pub face_coloring: FaceColoring,
    pub camera: Camera,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub optim: OptimConfig,
    #[serde(default)]
    pub loss: LossOptions,
    #[serde(default)]
    pub gradcheck: GradcheckConfig,
    /// Synthetic frame description; ignored when `frames` is non-empty.
    #[serde(default)]
    pub scene: Option<SceneConfig>,
    /// Frame directories as written by `synth`.
    #[serde(default)]
    pub frames: Vec<PathBuf>,
    #[serde(default)]
    pub init: InitConfig,
    /// Pose rendered by `render`; defaults to the scene's ground truth.
    #[serde(default)]
    pub pose: Option<PoseRecord>,
    #[serde(default)]
    pub symmetry: Option<PathBuf>,
    #[serde(default)]
    pub rgb_only: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub gt_pose: PoseRecord,
    #[serde(default)]
    pub noise: SensorNoise,
    #[serde(default)]
    pub occluder: Option<f64>,
    #[serde(default = "default_occluder_color")]
    pub occluder_color: [f64; 3],
    #[serde(default)]
    pub pseudo_perturbation: Perturbation,
}

/// Starting poses for refinement: the pseudo pose perturbed by `perturbation`, once per trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitConfig {
    pub perturbation: Perturbation,
    pub trials: usize,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self { perturbation: Perturbation::default(), trials: 1 }
    }
}

fn default_coloring() -> FaceColoring {
    FaceColoring::DistinctFaces
}

fn default_occluder_color() -> [f64; 3] {
    [0.45, 0.4, 0.35]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn invalid(e: impl ToString) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

impl RunConfig {
    /// Parses and validates; relative paths are resolved against `base`.
    pub fn from_json(text: &str, base: &Path, origin: &Path) -> Result<Self, ConfigError> {
        let mut cfg: RunConfig =
            serde_json::from_str(text).map_err(|err| ConfigError::Syntax { path: origin.to_path_buf(), err })?;
        if let MeshSpec::Loaded { path } = &mut cfg.mesh {
            *path = base.join(&*path).to_string_lossy().into_owned();
        }
        cfg.symmetry = cfg.symmetry.map(|p| base.join(p));
        cfg.frames = cfg.frames.iter().map(|p| base.join(p)).collect();
        cfg.out_dir = base.join(&cfg.out_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, base, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let MeshSpec::Loaded { path } = &self.mesh {
            if !Path::new(path).is_file() {
                return Err(ConfigError::MissingMesh(PathBuf::from(path)));
            }
        }
        if let Some(p) = &self.symmetry {
            if !p.is_file() {
                return Err(ConfigError::MissingSymmetry(p.clone()));
            }
        }
        self.camera.validate().map_err(invalid)?;
        self.weights.validate().map_err(invalid)?;
        self.render.validate().map_err(invalid)?;
        self.optim.validate().map_err(invalid)?;
        if self.init.trials == 0 {
            return Err(invalid("init.trials must be at least 1"));
        }
        if let Some(spec) = self.scene_spec().transpose()? {
            spec.validate().map_err(invalid)?;
        }
        Ok(())
    }

    pub fn load_mesh(&self) -> anyhow::Result<TriMesh> {
        match &self.mesh {
            MeshSpec::Loaded { path } => Ok(load_obj(Path::new(path))?),
            builtin => Ok(builtin.build_builtin(self.face_coloring).expect("built-in mesh")?),
        }
    }

    pub fn load_symmetries(&self) -> anyhow::Result<SymmetrySet> {
        match &self.symmetry {
            Some(p) => Ok(load_symmetries(p)?),
            None => Ok(SymmetrySet::identity_only()),
        }
    }

    pub fn loss_options(&self) -> LossOptions {
        LossOptions { rgb_only: self.rgb_only || self.loss.rgb_only, ..self.loss }
    }

    /// The synthetic scene, if one is configured.
    pub fn scene_spec(&self) -> Option<Result<SceneSpec, ConfigError>> {
        let sc = self.scene.as_ref()?;
        Some(sc.gt_pose.to_pose().map_err(invalid).map(|gt_pose| SceneSpec {
            mesh: self.mesh.clone(),
            face_coloring: self.face_coloring,
            gt_pose,
            cam: self.camera,
            noise: sc.noise,
            occluder: sc.occluder,
            occluder_color: sc.occluder_color,
            pseudo_perturbation: sc.pseudo_perturbation,
            seed: self.seed,
        }))
    }

    /// Pose for `render`: the explicit `pose`, else the scene's ground truth.
    pub fn render_pose(&self) -> Result<Pose, ConfigError> {
        if let Some(p) = &self.pose {
            return p.to_pose().map_err(invalid);
        }
        match self.scene_spec() {
            Some(spec) => Ok(spec?.gt_pose),
            None => Err(invalid("render needs `pose` or `scene.gt_pose`")),
        }
    }
}
