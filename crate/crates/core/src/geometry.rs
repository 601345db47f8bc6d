//! Meshes, poses, cameras, masks and the projection math shared by every other module.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat3, Vec3};

/// Gray assigned to vertices that carry no color.
pub const DEFAULT_VERTEX_COLOR: Vec3 = [0.7, 0.7, 0.7];

/// Threshold used to binarize probabilistic masks.
pub const MASK_THRESHOLD: f64 = 0.5;

const DEGENERATE_EPS: f64 = 1e-12;

/// Triangle mesh with per-vertex colors, in object-frame meters.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    colors: Vec<Vec3>,
    diameter: f64,
}

impl TriMesh {
    /// Validates indices, rejects degenerate faces and caches the diameter.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, colors: Vec<Vec3>) -> Result<Self> {
        if colors.len() != vertices.len() {
            return Err(Error::InvalidMesh("vertex color count differs from vertex count"));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate"));
        }
        for f in &faces {
            if f.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::InvalidMesh("face index out of range"));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh("degenerate face with repeated vertex"));
            }
        }
        let diameter = max_pairwise_distance(&vertices);
        if vertices.len() > 1 && diameter <= 0.0 {
            return Err(Error::InvalidMesh("all vertices coincide"));
        }
        Ok(Self { vertices, faces, colors, diameter })
    }

    pub fn with_uniform_color(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>, color: Vec3) -> Result<Self> {
        let colors = vec![color; vertices.len()];
        Self::new(vertices, faces, colors)
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> &[Vec3] {
        &self.colors
    }

    /// Maximum distance between any two vertices.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }
}

/// Exact diameter of a point set.
///
/// Points are visited by decreasing distance from the centroid; a pair can only beat the
/// current best if the sum of their radii does, which prunes most of the quadratic scan.
pub fn max_pairwise_distance(points: &[Vec3]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let n = points.len() as f64;
    let mut c = [0.0; 3];
    for p in points {
        c = linalg::add(c, *p);
    }
    let c = linalg::scale(c, 1.0 / n);
    let mut order: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (linalg::dist(*p, c), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut best_sq: f64 = 0.0;
    for (a, &(ra, ia)) in order.iter().enumerate() {
        let best = best_sq.sqrt();
        if 2.0 * ra < best {
            break;
        }
        for &(rb, ib) in &order[a + 1..] {
            if ra + rb < best {
                break;
            }
            best_sq = best_sq.max(linalg::norm_sq(linalg::sub(points[ia], points[ib])));
        }
    }
    best_sq.sqrt()
}

/// Gram-Schmidt map from the continuous 6D rotation representation to a rotation matrix.
///
/// The first three entries give the first column direction, the last three are
/// orthogonalized against it for the second column; the third column is their cross product.
pub fn rot6_to_matrix(rot6: &[f64; 6]) -> Result<Mat3> {
    let a1 = [rot6[0], rot6[1], rot6[2]];
    let a2 = [rot6[3], rot6[4], rot6[5]];
    if rot6.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateRotation);
    }
    let n1 = linalg::norm(a1);
    let n2 = linalg::norm(a2);
    if n1 < DEGENERATE_EPS || n2 < DEGENERATE_EPS {
        return Err(Error::DegenerateRotation);
    }
    if linalg::norm(linalg::cross(a1, a2)) < DEGENERATE_EPS * n1 * n2 {
        return Err(Error::DegenerateRotation);
    }
    let b1 = linalg::scale(a1, 1.0 / n1);
    let u2 = linalg::sub(a2, linalg::scale(b1, linalg::dot(b1, a2)));
    let b2 = linalg::scale(u2, 1.0 / linalg::norm(u2));
    let b3 = linalg::cross(b1, b2);
    Ok(linalg::from_columns(b1, b2, b3))
}

/// Canonical 6D representation of a rotation matrix: its first two columns.
pub fn matrix_to_rot6(r: &Mat3) -> [f64; 6] {
    [r[0][0], r[1][0], r[2][0], r[0][1], r[1][1], r[2][1]]
}

/// Pulls a cotangent on the rotation matrix back onto the 6D parameters.
pub fn rot6_backward(rot6: &[f64; 6], grad_r: &Mat3) -> [f64; 6] {
    let a1 = [rot6[0], rot6[1], rot6[2]];
    let a2 = [rot6[3], rot6[4], rot6[5]];
    let n1 = linalg::norm(a1);
    let b1 = linalg::scale(a1, 1.0 / n1);
    let proj = linalg::dot(b1, a2);
    let u2 = linalg::sub(a2, linalg::scale(b1, proj));
    let nu = linalg::norm(u2);
    let b2 = linalg::scale(u2, 1.0 / nu);

    let g1 = linalg::column(grad_r, 0);
    let g2 = linalg::column(grad_r, 1);
    let g3 = linalg::column(grad_r, 2);

    // b3 = b1 x b2
    let mut gb1 = linalg::add(g1, linalg::cross(b2, g3));
    let gb2 = linalg::add(g2, linalg::cross(g3, b1));

    // b2 = u2 / |u2|
    let gu2 = linalg::scale(linalg::sub(gb2, linalg::scale(b2, linalg::dot(b2, gb2))), 1.0 / nu);

    // u2 = a2 - (b1.a2) b1
    let ga2 = linalg::sub(gu2, linalg::scale(b1, linalg::dot(b1, gu2)));
    gb1 = linalg::sub(gb1, linalg::add(linalg::scale(gu2, proj), linalg::scale(a2, linalg::dot(b1, gu2))));

    // b1 = a1 / |a1|
    let ga1 = linalg::scale(linalg::sub(gb1, linalg::scale(b1, linalg::dot(b1, gb1))), 1.0 / n1);

    [ga1[0], ga1[1], ga1[2], ga2[0], ga2[1], ga2[2]]
}

/// Rigid transform `x -> R x + t` from the object frame to the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rot6: [f64; 6],
    pub trans: Vec3,
}

/// Number of optimized pose parameters (6 rotation + 3 translation).
pub const POSE_DIM: usize = 9;

impl Pose {
    pub fn identity() -> Self {
        Self::from_rt(&linalg::IDENTITY, [0.0; 3])
    }

    pub fn from_rt(r: &Mat3, t: Vec3) -> Self {
        Self { rot6: matrix_to_rot6(r), trans: t }
    }

    pub fn rotation(&self) -> Result<Mat3> {
        rot6_to_matrix(&self.rot6)
    }

    pub fn params(&self) -> [f64; POSE_DIM] {
        let r = &self.rot6;
        let t = &self.trans;
        [r[0], r[1], r[2], r[3], r[4], r[5], t[0], t[1], t[2]]
    }

    pub fn from_params(p: &[f64; POSE_DIM]) -> Self {
        Self { rot6: [p[0], p[1], p[2], p[3], p[4], p[5]], trans: [p[6], p[7], p[8]] }
    }

    /// Re-expresses the rotation by its canonical orthonormal 6D representative.
    pub fn canonical(&self) -> Result<Self> {
        Ok(Self::from_rt(&self.rotation()?, self.trans))
    }

    /// `self ∘ inner`: applies `inner` first.
    pub fn compose(&self, inner: &Pose) -> Result<Pose> {
        let r2 = self.rotation()?;
        let r1 = inner.rotation()?;
        let r = linalg::mat_mul(&r2, &r1);
        let t = linalg::add(linalg::mat_vec(&r2, inner.trans), self.trans);
        Ok(Self::from_rt(&r, t))
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|v| v.is_finite())
    }
}

/// Applies `R x + t` to every point.
pub fn transform_points(pose: &Pose, pts: &[Vec3]) -> Result<Vec<Vec3>> {
    let r = pose.rotation()?;
    Ok(pts.iter().map(|&p| linalg::add(linalg::mat_vec(&r, p), pose.trans)).collect())
}

/// Pinhole intrinsics together with the image size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

const MIN_PROJECT_DEPTH: f64 = 1e-9;

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidConfig("focal lengths must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("image size must be at least 1x1"));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::InvalidConfig("principal point must be finite"));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Pixel coordinates of a camera-frame point.
    pub fn project(&self, p: Vec3) -> Result<[f64; 2]> {
        if !(p[2] > MIN_PROJECT_DEPTH) {
            return Err(Error::BehindCamera);
        }
        Ok([self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy])
    }

    /// `K⁻¹ (x, y, 1)ᵀ` for the center of pixel `(col, row)`.
    pub fn ray(&self, col: usize, row: usize) -> Vec3 {
        let x = col as f64 + 0.5;
        let y = row as f64 + 0.5;
        [(x - self.cx) / self.fx, (y - self.cy) / self.fy, 1.0]
    }
}

/// Single-channel image: masks in `[0, 1]`, depth maps in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

/// Probabilistic or binary object mask.
pub type Mask = Plane;
/// Depth map in meters; 0 marks invalid or background pixels.
pub type DepthMap = Plane;

impl Plane {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self { width, height, data }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    /// Binary copy: 1 where the value reaches `threshold`, else 0.
    pub fn binarized(&self, threshold: f64) -> Self {
        let data = self.data.iter().map(|&v| if v >= threshold { 1.0 } else { 0.0 }).collect();
        Self { width: self.width, height: self.height, data }
    }

    pub fn ensure_same_dims(&self, other: &Plane) -> Result<()> {
        check_dims(self.dims(), other.dims())
    }
}

pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::ShapeMismatch { expected, found });
    }
    Ok(())
}

/// RGB image with channels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Vec3>,
}

impl RgbImage {
    pub fn filled(width: usize, height: usize, color: Vec3) -> Self {
        Self { width, height, data: vec![color; width * height] }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> Vec3 {
        self.data[row * self.width + col]
    }

    /// Pixelwise product with a mask, the `I ⊙ M` of the visual losses.
    pub fn masked(&self, mask: &Mask) -> Result<Self> {
        check_dims(self.dims(), mask.dims())?;
        let data = self.data.iter().zip(&mask.data).map(|(c, &m)| linalg::scale(*c, m)).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }
}

/// Split of pixel indices into `Pos` (value ≥ threshold) and `Neg` (the rest).
pub fn pos_neg_split(mask: &Mask, threshold: f64) -> (Vec<usize>, Vec<usize>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (i, &v) in mask.data.iter().enumerate() {
        if v >= threshold {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    (pos, neg)
}

/// Camera-frame points lifted from a depth map, with the pixel each point came from.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub pixels: Vec<usize>,
}

/// Lifts every positive mask pixel with valid depth to `K⁻¹ (x, y, 1)ᵀ · depth`.
pub fn backproject(depth: &DepthMap, mask: &Mask, cam: &Camera) -> Result<PointCloud> {
    depth.ensure_same_dims(mask)?;
    let mut points = Vec::new();
    let mut pixels = Vec::new();
    for row in 0..depth.height {
        for col in 0..depth.width {
            let i = row * depth.width + col;
            let d = depth.data[i];
            if mask.data[i] >= MASK_THRESHOLD && d > 0.0 {
                points.push(linalg::scale(cam.ray(col, row), d));
                pixels.push(i);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(PointCloud { points, pixels })
}

/// Finite set of object-frame rotations under which the object looks the same.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetrySet {
    rotations: Vec<Mat3>,
}

const ROTATION_TOL: f64 = 1e-9;

impl SymmetrySet {
    pub fn identity_only() -> Self {
        Self { rotations: vec![linalg::IDENTITY] }
    }

    /// Builds the set, placing the identity first and rejecting improper matrices.
    pub fn new(rotations: Vec<Mat3>) -> Result<Self> {
        for r in &rotations {
            if linalg::orthonormality_defect(r) > ROTATION_TOL || (linalg::det(r) - 1.0).abs() > ROTATION_TOL {
                return Err(Error::InvalidConfig("symmetry element is not a proper rotation"));
            }
        }
        let mut out = vec![linalg::IDENTITY];
        for r in rotations {
            if !is_identity(&r) {
                out.push(r);
            }
        }
        Ok(Self { rotations: out })
    }

    /// `n`-fold discrete symmetry about an object-frame axis.
    pub fn cyclic(axis: Vec3, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig("symmetry order must be at least 1"));
        }
        let rots = (0..n)
            .map(|k| linalg::axis_angle(axis, 2.0 * core::f64::consts::PI * k as f64 / n as f64))
            .collect();
        Self::new(rots)
    }

    pub fn rotations(&self) -> &[Mat3] {
        &self.rotations
    }

    /// True when the set holds more than the identity.
    pub fn is_symmetric(&self) -> bool {
        self.rotations.len() > 1
    }
}

fn is_identity(r: &Mat3) -> bool {
    (0..3).all(|i| (0..3).all(|j| (r[i][j] - if i == j { 1.0 } else { 0.0 }).abs() <= ROTATION_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::{FRAC_1_SQRT_2, PI};

    fn assert_mat_close(a: &Mat3, b: &Mat3, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() <= tol, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn rot6_canonical_basis_is_identity() {
        let r = rot6_to_matrix(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        assert_mat_close(&r, &linalg::IDENTITY, 0.0);
        let r = rot6_to_matrix(&[2.0, 0.0, 0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_mat_close(&r, &linalg::IDENTITY, 1e-15);
    }

    #[test]
    fn rot6_gram_schmidt_by_hand() {
        // b1 = (1,1,0)/√2; a2 - (b1·a2) b1 = (0,1,0) - (1/2)(1,1,0) = (-1/2, 1/2, 0)
        let r = rot6_to_matrix(&[1.0, 1.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let expected = linalg::from_columns(
            [FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
            [-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0],
            [0.0, 0.0, 1.0],
        );
        assert_mat_close(&r, &expected, 1e-15);
    }

    #[test]
    fn rot6_rejects_degenerate_input() {
        assert_eq!(rot6_to_matrix(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0]), Err(Error::DegenerateRotation));
        assert_eq!(rot6_to_matrix(&[0.0, 0.0, 0.0, 0.0, 1.0, 0.0]), Err(Error::DegenerateRotation));
        assert_eq!(rot6_to_matrix(&[1.0, 0.0, 0.0, 0.0, 1e-13, 0.0]), Err(Error::DegenerateRotation));
    }

    #[test]
    fn rot6_backward_matches_finite_differences() {
        let rot6 = [0.3, -1.2, 0.5, 0.9, 0.4, -0.7];
        // L = Σ W ⊙ R for a fixed weight matrix
        let w = [[0.2, -1.0, 0.5], [1.5, 0.3, -0.4], [-0.8, 0.9, 1.1]];
        let loss = |p: &[f64; 6]| {
            let r = rot6_to_matrix(p).unwrap();
            (0..3).map(|i| (0..3).map(|j| w[i][j] * r[i][j]).sum::<f64>()).sum::<f64>()
        };
        let g = rot6_backward(&rot6, &w);
        for k in 0..6 {
            let h = 1e-6;
            let mut a = rot6;
            let mut b = rot6;
            a[k] += h;
            b[k] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "component {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn transform_points_cases() {
        let pts = [[0.1, -0.2, 0.3], [1.0, 2.0, 3.0]];
        assert_eq!(transform_points(&Pose::identity(), &pts).unwrap(), pts.to_vec());

        let shifted = Pose::from_rt(&linalg::IDENTITY, [0.0, 0.0, 1.0]);
        assert_eq!(transform_points(&shifted, &[[0.0; 3]]).unwrap(), vec![[0.0, 0.0, 1.0]]);

        let rz = Pose::from_rt(&linalg::axis_angle([0.0, 0.0, 1.0], PI / 2.0), [0.0; 3]);
        let out = transform_points(&rz, &[[1.0, 0.0, 0.0]]).unwrap()[0];
        assert!(linalg::dist(out, [0.0, 1.0, 0.0]) < 1e-12);
    }

    #[test]
    fn project_cases() {
        let cam = Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
        assert_eq!(cam.project([0.0, 0.0, 1.0]).unwrap(), [50.0, 50.0]);
        assert_eq!(cam.project([1.0, 0.0, 2.0]).unwrap(), [100.0, 50.0]);
        assert_eq!(cam.project([0.0, 0.0, -1.0]), Err(Error::BehindCamera));
        assert_eq!(cam.project([0.0, 0.0, 0.0]), Err(Error::BehindCamera));
    }

    #[test]
    fn backproject_single_pixel_by_hand() {
        let cam = Camera::new(1.0, 1.0, 0.0, 0.0, 1, 1).unwrap();
        let depth = Plane::filled(1, 1, 2.0);
        let mask = Plane::filled(1, 1, 1.0);
        let cloud = backproject(&depth, &mask, &cam).unwrap();
        assert_eq!(cloud.points, vec![[1.0, 1.0, 2.0]]);
        assert_eq!(cloud.pixels, vec![0]);
    }

    #[test]
    fn backproject_empty_mask_errors() {
        let cam = Camera::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let depth = Plane::filled(4, 4, 1.0);
        assert_eq!(backproject(&depth, &Plane::zeros(4, 4), &cam), Err(Error::EmptyCloud));
        // Masked pixels without valid depth do not count.
        assert_eq!(backproject(&Plane::zeros(4, 4), &Plane::filled(4, 4, 1.0), &cam), Err(Error::EmptyCloud));
    }

    #[test]
    fn backproject_dimension_check() {
        let cam = Camera::new(10.0, 10.0, 2.0, 2.0, 4, 4).unwrap();
        let err = backproject(&Plane::zeros(4, 4), &Plane::zeros(3, 4), &cam).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn pos_neg_split_cases() {
        let binary = Plane { width: 3, height: 1, data: vec![1.0, 0.0, 1.0] };
        assert_eq!(pos_neg_split(&binary, 0.5), (vec![0, 2], vec![1]));

        let ones = Plane::filled(2, 2, 1.0);
        let (pos, neg) = pos_neg_split(&ones, 0.5);
        assert_eq!(pos.len(), 4);
        assert!(neg.is_empty());

        let checker = Plane::from_fn(2, 2, |c, r| ((c + r) % 2) as f64);
        let (pos, neg) = pos_neg_split(&checker, 0.5);
        assert_eq!(pos, vec![1, 2]);
        assert_eq!(neg, vec![0, 3]);
    }

    #[test]
    fn mesh_validation() {
        let v = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        let c = vec![DEFAULT_VERTEX_COLOR; 3];
        assert!(TriMesh::new(v.clone(), vec![[0, 1, 2]], c.clone()).is_ok());
        assert!(matches!(TriMesh::new(v.clone(), vec![[0, 1, 3]], c.clone()), Err(Error::InvalidMesh(_))));
        assert!(matches!(TriMesh::new(v.clone(), vec![[0, 1, 1]], c.clone()), Err(Error::InvalidMesh(_))));
        assert!(matches!(TriMesh::new(v, vec![[0, 1, 2]], c[..2].to_vec()), Err(Error::InvalidMesh(_))));
    }

    #[test]
    fn symmetry_set_puts_identity_first() {
        let flip = linalg::axis_angle([0.0, 0.0, 1.0], PI);
        let set = SymmetrySet::new(vec![flip, linalg::IDENTITY]).unwrap();
        assert_eq!(set.rotations().len(), 2);
        assert_eq!(set.rotations()[0], linalg::IDENTITY);
        assert!(set.is_symmetric());
        assert!(!SymmetrySet::identity_only().is_symmetric());

        let bad = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(SymmetrySet::new(vec![bad]).is_err());
        let reflection = [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(SymmetrySet::new(vec![reflection]).is_err());
    }
}
