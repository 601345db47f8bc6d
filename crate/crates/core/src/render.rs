//! Soft rasterizer producing color, depth and an amodal probabilistic mask, with an analytic
//! backward pass onto the nine pose parameters.
//!
//! Every triangle covers a pixel with weight 1 when the pixel center lies inside its
//! projection and `exp(-d²/σ)` otherwise, where `d` is the distance to the projected
//! boundary. Coverages beyond `3√σ` are exactly zero; between `2.5√σ` and `3√σ` the
//! exponential is multiplied by a quintic smoothstep taper so coverage reaches zero
//! continuously. Per pixel, the covering triangles are blended by a softmax over `-z/γ`
//! weighted by coverage; the mask is the probabilistic union `1 - Π(1 - α)`.
//! Attributes are interpolated perspective-correctly, using the barycentric coordinates of
//! the closest boundary point for pixels outside a triangle.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rot6_backward, Camera, DepthMap, Mask, Plane, Pose, RgbImage, TriMesh, POSE_DIM};
use crate::linalg::{self, Mat3, Vec3};

/// Triangles with a vertex closer than this (meters) are dropped for the frame.
pub const NEAR_PLANE: f64 = 1e-4;

/// Coverage radius in units of `√σ`.
const CUTOFF_SIGMAS: f64 = 3.0;
/// Start of the band in which coverage is tapered smoothly to zero at the cutoff.
const TAPER_SIGMAS: f64 = 2.5;

/// Mask level at which the soft depth reaches its full composite value. Below it the depth
/// fades smoothly to 0 at the coverage cutoff so the depth map stays continuous in the pose.
pub const DEPTH_FADE_KNEE: f64 = 0.05;

const DEGENERATE_AREA: f64 = 1e-12;

/// Default compositing temperature (meters), sized for objects around one meter across. Much
/// smaller values make the softmax amplify the faint fringe of a nearer face by `exp(Δz/γ)`,
/// which turns the coverage cutoff into a near-discontinuity; larger ones let faces a meter
/// behind leak into the soft depth with weight `exp(-1/γ)`.
pub const DEFAULT_GAMMA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    /// Silhouette softness in squared pixels.
    pub sigma: f64,
    /// Depth-compositing temperature in meters.
    pub gamma: f64,
    pub background: Vec3,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { sigma: 3.0, gamma: DEFAULT_GAMMA, background: [0.0; 3] }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig("sigma must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig("gamma must be positive"));
        }
        Ok(())
    }

    fn cutoff_sq(&self) -> f64 {
        CUTOFF_SIGMAS * CUTOFF_SIGMAS * self.sigma
    }
}

/// Result of [`render`]. The tape holds everything [`grad_render`] needs.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: RgbImage,
    /// Soft-composited view-space depth, 0 where nothing covers the pixel.
    pub depth: DepthMap,
    /// Amodal probabilistic silhouette.
    pub mask: Mask,
    /// Nearest depth among triangles whose interior contains the pixel center.
    pub hard_depth: DepthMap,
    /// Faces dropped by the near plane.
    pub clipped_faces: usize,
    tape: Tape,
}

#[derive(Debug, Clone)]
struct Tape {
    cam: Camera,
    cfg: RenderConfig,
    pose: Pose,
    object_vertices: Vec<Vec3>,
    cam_vertices: Vec<Vec3>,
    colors: Vec<Vec3>,
    tris: Vec<ScreenTri>,
    /// For each image row, the triangles whose padded bounding box touches it.
    row_bins: Vec<Vec<u32>>,
}

#[derive(Debug, Clone)]
struct ScreenTri {
    verts: [usize; 3],
    q: [[f64; 2]; 3],
    z: [f64; 3],
    area: f64,
    col_lo: usize,
    col_hi: usize,
}

#[derive(Debug, Clone, Copy)]
enum HitGeom {
    Inside,
    /// Closest boundary point `q[a] + s (q[b] - q[a])`; `free` when `s` is not clamped.
    Edge { a: usize, b: usize, s: f64, free: bool },
}

#[derive(Debug, Clone, Copy)]
struct Hit {
    tri: u32,
    alpha: f64,
    /// `dα / d(d²)`
    alpha_slope: f64,
    geom: HitGeom,
    bary: [f64; 3],
    /// `bary[k] / z[k]`
    persp: [f64; 3],
    persp_sum: f64,
    z: f64,
    color: Vec3,
}

/// Renders `mesh` at `pose` through the pinhole `cam`.
pub fn render(mesh: &TriMesh, pose: &Pose, cam: &Camera, cfg: &RenderConfig) -> Result<RenderOutput> {
    if mesh.faces().is_empty() {
        return Err(Error::EmptyMesh);
    }
    cfg.validate()?;
    cam.validate()?;
    let rotation = pose.rotation()?;
    let cam_vertices: Vec<Vec3> =
        mesh.vertices().iter().map(|&v| linalg::add(linalg::mat_vec(&rotation, v), pose.trans)).collect();

    let cutoff = cfg.cutoff_sq().sqrt();
    let mut tris = Vec::with_capacity(mesh.faces().len());
    let mut clipped_faces = 0;
    let mut row_bins: Vec<Vec<u32>> = vec![Vec::new(); cam.height];
    for face in mesh.faces() {
        let pts = face.map(|i| cam_vertices[i]);
        if pts.iter().any(|p| !(p[2] >= NEAR_PLANE)) {
            clipped_faces += 1;
            continue;
        }
        let q = pts.map(|p| [cam.fx * p[0] / p[2] + cam.cx, cam.fy * p[1] / p[2] + cam.cy]);
        let area = cross2(sub2(q[1], q[0]), sub2(q[2], q[0]));
        let lo_x = q.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min) - cutoff;
        let hi_x = q.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max) + cutoff;
        let lo_y = q.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min) - cutoff;
        let hi_y = q.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max) + cutoff;
        // pixel centers sit at index + 0.5
        let Some((col_lo, col_hi)) = pixel_span(lo_x, hi_x, cam.width) else { continue };
        let Some((row_lo, row_hi)) = pixel_span(lo_y, hi_y, cam.height) else { continue };
        let id = tris.len() as u32;
        for bin in &mut row_bins[row_lo..=row_hi] {
            bin.push(id);
        }
        tris.push(ScreenTri { verts: *face, q, z: pts.map(|p| p[2]), area, col_lo, col_hi });
    }

    let tape = Tape {
        cam: *cam,
        cfg: *cfg,
        pose: *pose,
        object_vertices: mesh.vertices().to_vec(),
        cam_vertices,
        colors: mesh.colors().to_vec(),
        tris,
        row_bins,
    };

    let (w, h) = (cam.width, cam.height);
    let mut color = RgbImage::filled(w, h, cfg.background);
    let mut depth = Plane::zeros(w, h);
    let mut mask = Plane::zeros(w, h);
    let mut hard_depth = Plane::zeros(w, h);
    let mut hits = Vec::new();
    for row in 0..h {
        for col in 0..w {
            tape.collect_hits(col, row, &mut hits);
            if hits.is_empty() {
                continue;
            }
            let px = Composite::new(&hits, cfg);
            let i = row * w + col;
            color.data[i] = px.color(cfg.background);
            depth.data[i] = px.depth();
            mask.data[i] = px.mask;
            hard_depth.data[i] = hits
                .iter()
                .filter(|h| matches!(h.geom, HitGeom::Inside))
                .map(|h| h.z)
                .reduce(f64::min)
                .unwrap_or(0.0);
        }
    }
    Ok(RenderOutput { color, depth, mask, hard_depth, clipped_faces, tape })
}

/// Cotangents of a scalar loss with respect to the three rendered outputs.
#[derive(Debug, Clone)]
pub struct RenderCotangents {
    pub color: Vec<Vec3>,
    pub depth: Vec<f64>,
    pub mask: Vec<f64>,
}

impl RenderCotangents {
    pub fn zeros(width: usize, height: usize) -> Self {
        let n = width * height;
        Self { color: vec![[0.0; 3]; n], depth: vec![0.0; n], mask: vec![0.0; n] }
    }

    pub fn add_assign(&mut self, other: &RenderCotangents, weight: f64) {
        for (a, b) in self.color.iter_mut().zip(&other.color) {
            *a = linalg::add(*a, linalg::scale(*b, weight));
        }
        for (a, b) in self.depth.iter_mut().zip(&other.depth) {
            *a += weight * b;
        }
        for (a, b) in self.mask.iter_mut().zip(&other.mask) {
            *a += weight * b;
        }
    }

    fn is_zero(&self) -> bool {
        self.color.iter().all(|c| c.iter().all(|&v| v == 0.0))
            && self.depth.iter().all(|&v| v == 0.0)
            && self.mask.iter().all(|&v| v == 0.0)
    }
}

/// Gradient of a scalar loss with respect to `(rot6, trans)` given its output cotangents.
pub fn grad_render(out: &RenderOutput, cot: &RenderCotangents) -> Result<[f64; POSE_DIM]> {
    let tape = &out.tape;
    let (w, h) = (tape.cam.width, tape.cam.height);
    for len in [cot.color.len(), cot.depth.len(), cot.mask.len()] {
        if len != w * h {
            return Err(Error::ShapeMismatch { expected: (w, h), found: (len, 1) });
        }
    }
    if cot.is_zero() {
        return Ok([0.0; POSE_DIM]);
    }
    let cfg = &tape.cfg;
    let nv = tape.cam_vertices.len();
    let mut g_screen = vec![[0.0f64; 2]; nv];
    let mut g_vdepth = vec![0.0f64; nv];
    let mut hits = Vec::new();
    let mut g_alpha = Vec::new();
    let mut survive = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let i = row * w + col;
            let (gc, gd, gm) = (cot.color[i], cot.depth[i], cot.mask[i]);
            if gc == [0.0; 3] && gd == 0.0 && gm == 0.0 {
                continue;
            }
            tape.collect_hits(col, row, &mut hits);
            if hits.is_empty() {
                continue;
            }
            let px = Composite::new(&hits, cfg);

            // color = M fg + (1 - M) bg,  depth = fade(M) fg_z,  mask = M
            let fade = px.fade();
            let mut g_mask = gm + linalg::dot(gc, linalg::sub(px.fg_color, cfg.background)) + gd * px.fg_depth * px.fade_slope();
            let g_fg_color = linalg::scale(gc, px.mask);
            let g_fg_depth = gd * fade;
            if !g_mask.is_finite() {
                g_mask = 0.0;
            }

            // dM/dα_T = Π_{U≠T} (1 - α_U)
            survive.clear();
            survive.extend(hits.iter().map(|h| 1.0 - h.alpha));
            g_alpha.clear();
            g_alpha.resize(hits.len(), 0.0);
            let mut prefix = 1.0;
            for (t, ga) in g_alpha.iter_mut().enumerate() {
                *ga = prefix;
                prefix *= survive[t];
            }
            let mut suffix = 1.0;
            for t in (0..hits.len()).rev() {
                g_alpha[t] *= suffix * g_mask;
                suffix *= survive[t];
            }

            for (t, hit) in hits.iter().enumerate() {
                let e = px.exps[t];
                let omega = hit.alpha * e;
                let wn = omega / px.weight_sum;
                let g_omega = (linalg::dot(g_fg_color, linalg::sub(hit.color, px.fg_color))
                    + g_fg_depth * (hit.z - px.fg_depth))
                    / px.weight_sum;
                let ga = g_alpha[t] + g_omega * e;
                let gz = g_fg_depth * wn - g_omega * omega / cfg.gamma;
                let gcol = linalg::scale(g_fg_color, wn);
                tape.backprop_hit(col, row, hit, ga, gz, gcol, &mut g_screen, &mut g_vdepth);
            }
        }
    }

    let cam = &tape.cam;
    let mut g_rot: Mat3 = [[0.0; 3]; 3];
    let mut g_trans = [0.0; 3];
    for v in 0..nv {
        let [gu, gv] = g_screen[v];
        let gz = g_vdepth[v];
        if gu == 0.0 && gv == 0.0 && gz == 0.0 {
            continue;
        }
        let [x, y, z] = tape.cam_vertices[v];
        let g_p = [
            gu * cam.fx / z,
            gv * cam.fy / z,
            gz - gu * cam.fx * x / (z * z) - gv * cam.fy * y / (z * z),
        ];
        g_trans = linalg::add(g_trans, g_p);
        let obj = tape.object_vertices[v];
        for (r, gr) in g_rot.iter_mut().enumerate() {
            for (c, g) in gr.iter_mut().enumerate() {
                *g += g_p[r] * obj[c];
            }
        }
    }
    let g6 = rot6_backward(&tape.pose.rot6, &g_rot);
    Ok([g6[0], g6[1], g6[2], g6[3], g6[4], g6[5], g_trans[0], g_trans[1], g_trans[2]])
}

impl RenderOutput {
    pub fn camera(&self) -> &Camera {
        &self.tape.cam
    }

    pub fn config(&self) -> &RenderConfig {
        &self.tape.cfg
    }

    pub fn pose(&self) -> &Pose {
        &self.tape.pose
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.tape.cam.width, self.tape.cam.height)
    }

    /// Zeroed cotangents matching this render.
    pub fn zero_cotangents(&self) -> RenderCotangents {
        RenderCotangents::zeros(self.tape.cam.width, self.tape.cam.height)
    }
}

/// Per-pixel blend of the covering triangles.
struct Composite {
    mask: f64,
    fg_color: Vec3,
    fg_depth: f64,
    weight_sum: f64,
    exps: Vec<f64>,
}

impl Composite {
    fn new(hits: &[Hit], cfg: &RenderConfig) -> Self {
        let z_ref = hits.iter().map(|h| h.z).fold(f64::INFINITY, f64::min);
        let mut survive = 1.0;
        let mut weight_sum = 0.0;
        let mut acc_color = [0.0; 3];
        let mut acc_depth = 0.0;
        let mut exps = Vec::with_capacity(hits.len());
        for h in hits {
            survive *= 1.0 - h.alpha;
            let e = (-(h.z - z_ref) / cfg.gamma).exp();
            exps.push(e);
            let omega = h.alpha * e;
            weight_sum += omega;
            acc_color = linalg::add(acc_color, linalg::scale(h.color, omega));
            acc_depth += omega * h.z;
        }
        Self {
            mask: 1.0 - survive,
            fg_color: linalg::scale(acc_color, 1.0 / weight_sum),
            fg_depth: acc_depth / weight_sum,
            weight_sum,
            exps,
        }
    }

    fn color(&self, background: Vec3) -> Vec3 {
        linalg::add(linalg::scale(self.fg_color, self.mask), linalg::scale(background, 1.0 - self.mask))
    }

    fn fade_arg(&self) -> f64 {
        let floor = (-CUTOFF_SIGMAS * CUTOFF_SIGMAS).exp();
        ((self.mask - floor) / (DEPTH_FADE_KNEE - floor)).clamp(0.0, 1.0)
    }

    fn fade(&self) -> f64 {
        smootherstep(self.fade_arg()).0
    }

    fn fade_slope(&self) -> f64 {
        let floor = (-CUTOFF_SIGMAS * CUTOFF_SIGMAS).exp();
        smootherstep(self.fade_arg()).1 / (DEPTH_FADE_KNEE - floor)
    }

    fn depth(&self) -> f64 {
        self.fg_depth * self.fade()
    }
}

impl Tape {
    fn collect_hits(&self, col: usize, row: usize, hits: &mut Vec<Hit>) {
        hits.clear();
        let p = [col as f64 + 0.5, row as f64 + 0.5];
        let cutoff_sq = self.cfg.cutoff_sq();
        for &id in &self.row_bins[row] {
            let tri = &self.tris[id as usize];
            if col < tri.col_lo || col > tri.col_hi {
                continue;
            }
            let Some((alpha, alpha_slope, geom, bary)) = coverage(tri, p, self.cfg.sigma, cutoff_sq) else { continue };
            let persp = [bary[0] / tri.z[0], bary[1] / tri.z[1], bary[2] / tri.z[2]];
            let persp_sum = persp[0] + persp[1] + persp[2];
            let mut color = [0.0; 3];
            for k in 0..3 {
                color = linalg::add(color, linalg::scale(self.colors[tri.verts[k]], persp[k]));
            }
            hits.push(Hit {
                tri: id,
                alpha,
                alpha_slope,
                geom,
                bary,
                persp,
                persp_sum,
                z: 1.0 / persp_sum,
                color: linalg::scale(color, 1.0 / persp_sum),
            });
        }
    }

    /// Chains the cotangents of one triangle's coverage, depth and color at a pixel back onto
    /// its screen-space vertices and vertex depths.
    #[allow(clippy::too_many_arguments)]
    fn backprop_hit(
        &self,
        col: usize,
        row: usize,
        hit: &Hit,
        g_alpha: f64,
        g_z: f64,
        g_color: Vec3,
        g_screen: &mut [[f64; 2]],
        g_vdepth: &mut [f64],
    ) {
        let tri = &self.tris[hit.tri as usize];
        let p = [col as f64 + 0.5, row as f64 + 0.5];
        let q_sum = hit.persp_sum;

        // z_T = 1 / Σ s_k,  c_T = Σ s_k c_k / Σ s_k,  s_k = b_k / z_k
        let mut g_bary = [0.0; 3];
        for k in 0..3 {
            let ck = self.colors[tri.verts[k]];
            let g_s = -g_z / (q_sum * q_sum) + linalg::dot(g_color, linalg::sub(ck, hit.color)) / q_sum;
            g_bary[k] = g_s / tri.z[k];
            g_vdepth[tri.verts[k]] -= g_s * hit.persp[k] / tri.z[k];
        }

        match hit.geom {
            HitGeom::Inside => {
                // b_k = E_k / A with E_k = cross(q_{k+1} - p, q_{k+2} - p) and A = Σ E_k
                let mut g_e = [0.0; 3];
                let mut g_area = 0.0;
                for k in 0..3 {
                    g_e[k] = g_bary[k] / tri.area;
                    g_area -= g_bary[k] * hit.bary[k] / tri.area;
                }
                for k in 0..3 {
                    let g = g_e[k] + g_area;
                    let k1 = (k + 1) % 3;
                    let k2 = (k + 2) % 3;
                    let w1 = sub2(tri.q[k1], p);
                    let w2 = sub2(tri.q[k2], p);
                    let v1 = tri.verts[k1];
                    let v2 = tri.verts[k2];
                    g_screen[v1][0] += g * w2[1];
                    g_screen[v1][1] -= g * w2[0];
                    g_screen[v2][0] -= g * w1[1];
                    g_screen[v2][1] += g * w1[0];
                }
            }
            HitGeom::Edge { a, b, s, free } => {
                let qa = tri.q[a];
                let qb = tri.q[b];
                let e = sub2(qb, qa);
                let closest = [qa[0] + s * e[0], qa[1] + s * e[1]];
                let diff = sub2(closest, p);
                // d² = |c - p|², envelope over s
                let g_d2 = g_alpha * hit.alpha_slope;
                let va = tri.verts[a];
                let vb = tri.verts[b];
                for c in 0..2 {
                    g_screen[va][c] += g_d2 * 2.0 * (1.0 - s) * diff[c];
                    g_screen[vb][c] += g_d2 * 2.0 * s * diff[c];
                }
                if free {
                    // bary[a] = 1 - s, bary[b] = s
                    let g_s = g_bary[b] - g_bary[a];
                    let e2 = dot2(e, e);
                    let w = sub2(p, qa);
                    for c in 0..2 {
                        g_screen[va][c] += g_s * (-e[c] - w[c] + 2.0 * s * e[c]) / e2;
                        g_screen[vb][c] += g_s * (w[c] - 2.0 * s * e[c]) / e2;
                    }
                }
            }
        }
    }
}

/// Coverage, closest-point geometry and screen-space barycentrics of one triangle at `p`.
fn coverage(tri: &ScreenTri, p: [f64; 2], sigma: f64, cutoff_sq: f64) -> Option<(f64, f64, HitGeom, [f64; 3])> {
    if tri.area.abs() > DEGENERATE_AREA {
        let e0 = cross2(sub2(tri.q[1], p), sub2(tri.q[2], p));
        let e1 = cross2(sub2(tri.q[2], p), sub2(tri.q[0], p));
        let e2 = cross2(sub2(tri.q[0], p), sub2(tri.q[1], p));
        let b = [e0 / tri.area, e1 / tri.area, e2 / tri.area];
        if b.iter().all(|&v| v >= 0.0) {
            return Some((1.0, 0.0, HitGeom::Inside, b));
        }
    }
    let mut best: Option<(f64, usize, usize, f64, bool)> = None;
    for (a, b) in [(0, 1), (1, 2), (2, 0)] {
        let e = sub2(tri.q[b], tri.q[a]);
        let w = sub2(p, tri.q[a]);
        let e2 = dot2(e, e);
        let (s, free) = if e2 <= 0.0 {
            (0.0, false)
        } else {
            let raw = dot2(w, e) / e2;
            if raw <= 0.0 {
                (0.0, false)
            } else if raw >= 1.0 {
                (1.0, false)
            } else {
                (raw, true)
            }
        };
        let d = [w[0] - s * e[0], w[1] - s * e[1]];
        let d2 = dot2(d, d);
        if best.map_or(true, |(bd, ..)| d2 < bd) {
            best = Some((d2, a, b, s, free));
        }
    }
    let (d2, a, b, s, free) = best?;
    if d2 > cutoff_sq {
        return None;
    }
    let mut bary = [0.0; 3];
    bary[a] = 1.0 - s;
    bary[b] = s;
    let (alpha, slope) = edge_coverage(d2, sigma);
    Some((alpha, slope, HitGeom::Edge { a, b, s, free }, bary))
}

/// Coverage at squared distance `d2` outside a triangle and its derivative in `d2`.
fn edge_coverage(d2: f64, sigma: f64) -> (f64, f64) {
    let g = (-d2 / sigma).exp();
    let u = (d2 / sigma).sqrt();
    if u <= TAPER_SIGMAS {
        return (g, -g / sigma);
    }
    let width = CUTOFF_SIGMAS - TAPER_SIGMAS;
    let x = ((CUTOFF_SIGMAS - u) / width).clamp(0.0, 1.0);
    let (taper, dtaper_dx) = smootherstep(x);
    let dtaper_du = -dtaper_dx / width;
    (g * taper, -g * taper / sigma + g * dtaper_du / (2.0 * u * sigma))
}

/// `6x⁵ - 15x⁴ + 10x³` on `[0, 1]` and its derivative; C² at both ends, so central differences
/// across the joins keep their second-order accuracy.
fn smootherstep(x: f64) -> (f64, f64) {
    (x * x * x * (x * (6.0 * x - 15.0) + 10.0), 30.0 * x * x * (x - 1.0) * (x - 1.0))
}

/// Inclusive index range of pixels whose centers fall in `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(n as f64 - 1.0);
    if !(first <= last) {
        return None;
    }
    Some((first as usize, last as usize))
}

#[inline]
fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
fn cross2(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}
