//! Pose and symmetry interchange: explicit row-major rotation matrices in JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};
use softpose_core::geometry::matrix_to_rot6;
use softpose_core::linalg::{Mat3, Vec3};
use softpose_core::{Pose, SymmetrySet};

use crate::error::FormatError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    /// Row-major object-to-camera rotation.
    pub rotation: Mat3,
    /// Meters.
    pub translation: Vec3,
}

impl PoseRecord {
    pub fn from_pose(pose: &Pose) -> Result<Self, FormatError> {
        Ok(Self { rotation: pose.rotation()?, translation: pose.trans })
    }

    /// Re-orthonormalizes the matrix through the 6D representation of its first two columns.
    pub fn to_pose(&self) -> Result<Pose, FormatError> {
        let pose = Pose { rot6: matrix_to_rot6(&self.rotation), trans: self.translation };
        Ok(pose.canonical()?)
    }
}

/// One pose per non-blank line.
pub fn parse_pose_lines(text: &str) -> Result<Vec<Pose>, FormatError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseRecord = serde_json::from_str(line).map_err(|e| FormatError::parse(i + 1, e.to_string()))?;
        out.push(rec.to_pose().map_err(|e| FormatError::parse(i + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn load_pose_lines(path: &Path) -> Result<Vec<Pose>, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_pose_lines(&text).map_err(|e| e.in_file(path))
}

pub fn pose_lines(poses: &[Pose]) -> Result<String, FormatError> {
    let mut s = String::new();
    for p in poses {
        s.push_str(&serde_json::to_string(&PoseRecord::from_pose(p)?)?);
        s.push('\n');
    }
    Ok(s)
}

/// JSON array of row-major 3×3 matrices; the identity is implied.
pub fn parse_symmetries(text: &str) -> Result<SymmetrySet, FormatError> {
    let mats: Vec<Mat3> = serde_json::from_str(text)?;
    Ok(SymmetrySet::new(mats)?)
}

pub fn load_symmetries(path: &Path) -> Result<SymmetrySet, FormatError> {
    let text = std::fs::read_to_string(path).map_err(|e| FormatError::io(path, e))?;
    parse_symmetries(&text).map_err(|e| e.in_file(path))
}
