//! On-disk frame directories: sensor images, pseudo masks and a `frame.json` with the camera
//! and poses.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use softpose_core::losses::{PseudoLabels, SensorFrame};
use softpose_core::{Camera, Pose};

use crate::error::FormatError;
use crate::png_io::{self, DEPTH_UNIT_M};
use crate::pose_io::PoseRecord;

pub const META: &str = "frame.json";
pub const COLOR: &str = "color.png";
pub const DEPTH: &str = "depth.png";
pub const MASK_VISIBLE: &str = "mask_visible.png";
pub const MASK_AMODAL: &str = "mask_amodal.png";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameMeta {
    camera: Camera,
    pseudo_pose: PoseRecord,
    #[serde(default)]
    gt_pose: Option<PoseRecord>,
    depth_unit_m: f64,
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub sensor: SensorFrame,
    pub pseudo: PseudoLabels,
    pub gt: Option<Pose>,
}

/// Writes `frame` into `dir`, creating it; a frame without depth gets no `depth.png`.
pub fn write_frame(dir: &Path, frame: &Frame) -> Result<(), FormatError> {
    fs::create_dir_all(dir).map_err(|e| FormatError::io(dir, e))?;
    let meta = FrameMeta {
        camera: frame.sensor.cam,
        pseudo_pose: PoseRecord::from_pose(&frame.pseudo.pose)?,
        gt_pose: frame.gt.as_ref().map(PoseRecord::from_pose).transpose()?,
        depth_unit_m: DEPTH_UNIT_M,
    };
    let meta_path = dir.join(META);
    fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| FormatError::io(&meta_path, e))?;
    png_io::write_color(&dir.join(COLOR), &frame.sensor.color)?;
    if let Some(depth) = &frame.sensor.depth {
        png_io::write_depth(&dir.join(DEPTH), depth)?;
    }
    png_io::write_mask(&dir.join(MASK_VISIBLE), &frame.pseudo.mask_vis)?;
    png_io::write_mask(&dir.join(MASK_AMODAL), &frame.pseudo.mask_amodal)
}

pub fn read_frame(dir: &Path) -> Result<Frame, FormatError> {
    let meta_path = dir.join(META);
    let text = fs::read_to_string(&meta_path).map_err(|e| FormatError::io(&meta_path, e))?;
    let meta: FrameMeta = serde_json::from_str(&text).map_err(|e| FormatError::from(e).in_file(&meta_path))?;
    if meta.depth_unit_m != DEPTH_UNIT_M {
        let msg = format!("depth unit {} m, expected {DEPTH_UNIT_M} m", meta.depth_unit_m);
        return Err(FormatError::PngLayout(msg).in_file(&meta_path));
    }
    let color = png_io::read_color(&dir.join(COLOR))?;
    let depth_path = dir.join(DEPTH);
    let depth = if depth_path.exists() { Some(png_io::read_depth(&depth_path)?) } else { None };
    let sensor = SensorFrame::new(color, depth, meta.camera)?;
    let vis = png_io::read_mask(&dir.join(MASK_VISIBLE))?;
    let amodal = png_io::read_mask(&dir.join(MASK_AMODAL))?;
    let pseudo = PseudoLabels::new(meta.pseudo_pose.to_pose()?, vis, amodal)?;
    let gt = meta.gt_pose.map(|p| p.to_pose()).transpose()?;
    Ok(Frame { sensor, pseudo, gt })
}
