use alloc::vec;
use alloc::vec::Vec;


use super::Graded;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{rot6_backward, Pose, SymmetrySet, POSE_DIM};
use crate::linalg::{self, Mat3, Vec3};
use crate::spatial::KdTree;

/// Default cap on model points used by the point-matching loss.
pub const PM_MAX_POINTS: usize = 1024;

/// Greedy farthest-point subsample of at most `k` points, starting from index 0. Ties go to
/// the lowest index, so the result is deterministic.
pub fn farthest_point_sample(points: &[Vec3], k: usize) -> Vec<Vec3> {
    if points.len() <= k {
        return points.to_vec();
    }
    let mut chosen = Vec::with_capacity(k);
    let mut dist = vec![f64::INFINITY; points.len()];
    let mut next = 0;
    for _ in 0..k {
        chosen.push(points[next]);
        let p = points[next];
        let mut best = (0, -1.0);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(linalg::norm_sq(linalg::sub(points[i], p)));
            if *d > best.1 {
                best = (i, *d);
            }
        }
        next = best.0;
    }
    chosen
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean L1 distance between `R x + t` and every symmetric pseudo placement, minimized over the
/// symmetry set. Returns the value and the gradients with respect to `R` and `t`.
fn pm_term(r: &Mat3, t: Vec3, pseudo_r: &Mat3, pseudo_t: Vec3, pts: &[Vec3], sym: &SymmetrySet) -> (f64, Mat3, Vec3) {
    let n = pts.len() as f64;
    let mut best: Option<(f64, Mat3)> = None;
    for s in sym.rotations() {
        let rs = linalg::mat_mul(pseudo_r, s);
        let v: f64 = pts
            .iter()
            .map(|&x| {
                let d = linalg::sub(linalg::add(linalg::mat_vec(r, x), t), linalg::add(linalg::mat_vec(&rs, x), pseudo_t));
                d[0].abs() + d[1].abs() + d[2].abs()
            })
            .sum::<f64>()
            / n;
        if best.as_ref().is_none_or(|b| v < b.0) {
            best = Some((v, rs));
        }
    }
    let (value, rs) = best.expect("symmetry set is never empty");
    let mut g_r = [[0.0; 3]; 3];
    let mut g_t = [0.0; 3];
    for &x in pts {
        let d = linalg::sub(linalg::add(linalg::mat_vec(r, x), t), linalg::add(linalg::mat_vec(&rs, x), pseudo_t));
        for i in 0..3 {
            let s = sign(d[i]) / n;
            g_t[i] += s;
            for j in 0..3 {
                g_r[i][j] += s * x[j];
            }
        }
    }
    (value, g_r, g_t)
}

/// Point-matching loss between the predicted and pseudo poses with the gradient with respect
/// to `pred`'s parameters. The disentangled form averages three terms in which only the
/// rotation, only `(t_x, t_y)` or only `t_z` take predicted values.
pub fn pm_loss(pred: &Pose, pseudo: &Pose, points: &[Vec3], sym: &SymmetrySet, disentangle: bool) -> Result<Graded<[f64; POSE_DIM]>> {
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let r = pred.rotation()?;
    let pr = pseudo.rotation()?;
    let (value, g_r, g_t) = if disentangle {
        let (pt, t) = (pseudo.trans, pred.trans);
        let (v_r, g_r, _) = pm_term(&r, pt, &pr, pt, points, sym);
        let (v_xy, _, g_xy) = pm_term(&pr, [t[0], t[1], pt[2]], &pr, pt, points, sym);
        let (v_z, _, g_z) = pm_term(&pr, [pt[0], pt[1], t[2]], &pr, pt, points, sym);
        let third = 1.0 / 3.0;
        let g_r = g_r.map(|row| row.map(|v| v * third));
        ((v_r + v_xy + v_z) * third, g_r, [g_xy[0] * third, g_xy[1] * third, g_z[2] * third])
    } else {
        pm_term(&r, pred.trans, &pr, pseudo.trans, points, sym)
    };
    let g6 = rot6_backward(&pred.rot6, &g_r);
    Ok(Graded { value, grad: [g6[0], g6[1], g6[2], g6[3], g6[4], g6[5], g_t[0], g_t[1], g_t[2]] })
}

/// Chamfer distance against a fixed source cloud whose search tree is built once.
#[derive(Debug, Clone)]
pub struct ChamferTarget {
    tree: KdTree,
}

impl ChamferTarget {
    pub fn new(source: &[Vec3]) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::EmptyCloud);
        }
        Ok(Self { tree: KdTree::new(source) })
    }

    pub fn points(&self) -> &[Vec3] {
        self.tree.points()
    }

    /// `mean_p min_q ‖p - q‖ + mean_q min_p ‖p - q‖` with `p` in the source and `q` in
    /// `cloud`; the gradient is with respect to the points of `cloud`.
    pub fn loss(&self, cloud: &[Vec3]) -> Result<Graded<Vec<Vec3>>> {
        if cloud.is_empty() {
            return Err(Error::EmptyCloud);
        }
        let source = self.tree.points();
        let other = KdTree::new(cloud);
        let mut grad = vec![[0.0; 3]; cloud.len()];
        let ns = source.len() as f64;
        let nr = cloud.len() as f64;
        let mut forward = Vec::with_capacity(source.len());
        for &p in source {
            let (j, d2) = other.nearest(p).expect("non-empty tree");
            let d = d2.sqrt();
            forward.push(d);
            if d > 0.0 {
                let u = linalg::scale(linalg::sub(cloud[j], p), 1.0 / (d * ns));
                grad[j] = linalg::add(grad[j], u);
            }
        }
        let mut backward = Vec::with_capacity(cloud.len());
        for (q, g) in cloud.iter().zip(grad.iter_mut()) {
            let (i, d2) = self.tree.nearest(*q).expect("non-empty tree");
            let d = d2.sqrt();
            backward.push(d);
            if d > 0.0 {
                *g = linalg::add(*g, linalg::scale(linalg::sub(*q, source[i]), 1.0 / (d * nr)));
            }
        }
        let value = linalg::pairwise_sum(&forward) / ns + linalg::pairwise_sum(&backward) / nr;
        Ok(Graded { value, grad })
    }
}

/// Unsquared chamfer distance with the gradient with respect to `cloud_r`.
pub fn chamfer_loss(cloud_s: &[Vec3], cloud_r: &[Vec3]) -> Result<Graded<Vec<Vec3>>> {
    ChamferTarget::new(cloud_s)?.loss(cloud_r)
}
