//! Pose and mask accuracy metrics.

use alloc::vec::Vec;


use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, transform_points, Mask, Pose, SymmetrySet, TriMesh, MASK_THRESHOLD};
use crate::linalg;
use crate::spatial::KdTree;

/// Default ADD(-S) acceptance threshold as a fraction of the object diameter.
pub const ADD_THRESHOLD_FRAC: f64 = 0.1;
/// Default upper end of the AUC threshold range, in meters.
pub const AUC_MAX_THRESHOLD: f64 = 0.10;

/// A predicted pose with its ground truth and the object it refers to.
#[derive(Debug, Clone, Copy)]
pub struct PoseEstimate<'a> {
    pub pred: Pose,
    pub gt: Pose,
    pub mesh: &'a TriMesh,
    pub sym: &'a SymmetrySet,
}

/// Mean distance between corresponding model points under the two poses.
pub fn e_add(pred: &Pose, gt: &Pose, mesh: &TriMesh) -> Result<f64> {
    let a = transform_points(gt, mesh.vertices())?;
    let b = transform_points(pred, mesh.vertices())?;
    let d: Vec<f64> = a.iter().zip(&b).map(|(p, q)| linalg::dist(*p, *q)).collect();
    Ok(linalg::pairwise_sum(&d) / d.len().max(1) as f64)
}

/// Mean distance from each predicted model point to the closest ground-truth model point.
pub fn e_add_s(pred: &Pose, gt: &Pose, mesh: &TriMesh) -> Result<f64> {
    let a = transform_points(gt, mesh.vertices())?;
    let b = transform_points(pred, mesh.vertices())?;
    let tree = KdTree::new(&a);
    let d: Vec<f64> = b.iter().map(|q| tree.nearest(*q).map_or(0.0, |(_, d2)| d2.sqrt())).collect();
    Ok(linalg::pairwise_sum(&d) / d.len().max(1) as f64)
}

impl PoseEstimate<'_> {
    pub fn e_add(&self) -> Result<f64> {
        e_add(&self.pred, &self.gt, self.mesh)
    }

    pub fn e_add_s(&self) -> Result<f64> {
        e_add_s(&self.pred, &self.gt, self.mesh)
    }

    /// ADD-S for objects with a non-trivial symmetry set when `use_adds_for_sym`, else ADD.
    pub fn e_add_auto(&self, use_adds_for_sym: bool) -> Result<f64> {
        if use_adds_for_sym && self.sym.is_symmetric() {
            self.e_add_s()
        } else {
            self.e_add()
        }
    }
}

/// Percentage of estimates whose ADD(-S) error is below `threshold_frac` of the diameter.
pub fn add_recall(estimates: &[PoseEstimate<'_>], threshold_frac: f64, use_adds_for_sym: bool) -> Result<f64> {
    if estimates.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut hits = 0usize;
    for est in estimates {
        if est.e_add_auto(use_adds_for_sym)? < threshold_frac * est.mesh.diameter() {
            hits += 1;
        }
    }
    Ok(100.0 * hits as f64 / estimates.len() as f64)
}

/// Area under the accuracy-vs-threshold curve on `[0, max_threshold]`, as a percentage. Exact:
/// the mean of `max(0, 1 - e / max_threshold)`.
pub fn auc(errors: &[f64], max_threshold: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    let parts: Vec<f64> = errors.iter().map(|&e| (1.0 - e / max_threshold).max(0.0)).collect();
    Ok(100.0 * linalg::pairwise_sum(&parts) / errors.len() as f64)
}

/// [`auc`] approximated by the midpoint rule over `steps` thresholds, for cross-checking.
pub fn auc_sweep(errors: &[f64], max_threshold: f64, steps: usize) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut acc = 0.0;
    for k in 0..steps {
        let tau = (k as f64 + 0.5) / steps as f64 * max_threshold;
        let hits = errors.iter().filter(|&&e| e < tau).count();
        acc += hits as f64 / errors.len() as f64;
    }
    Ok(100.0 * acc / steps as f64)
}

/// Intersection over union of the binarized masks, as a percentage; 100 when both are empty.
pub fn miou(pred: &Mask, gt: &Mask) -> Result<f64> {
    check_dims(gt.dims(), pred.dims())?;
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let (p, g) = (p >= MASK_THRESHOLD, g >= MASK_THRESHOLD);
        inter += (p && g) as usize;
        union += (p || g) as usize;
    }
    if union == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * inter as f64 / union as f64)
}

/// Geodesic angle between the two rotations, in degrees.
pub fn rotation_angle_error(pred: &Pose, gt: &Pose) -> Result<f64> {
    let rel = linalg::mat_mul(&linalg::transpose(&pred.rotation()?), &gt.rotation()?);
    let c = ((linalg::trace(&rel) - 1.0) / 2.0).clamp(-1.0, 1.0);
    Ok(c.acos().to_degrees())
}

/// Euclidean distance between the translations, in meters.
pub fn translation_error(pred: &Pose, gt: &Pose) -> f64 {
    linalg::dist(pred.trans, gt.trans)
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(a.cmp(&b)));
    let mut r = alloc::vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation. A constant series has no defined correlation and yields 0.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { left: xs.len(), right: ys.len() });
    }
    if xs.is_empty() {
        return Err(Error::EmptyList);
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}
