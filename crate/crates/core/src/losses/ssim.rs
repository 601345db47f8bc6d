use alloc::vec;
use alloc::vec::Vec;


use super::Graded;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, RgbImage};

pub const WINDOW: usize = 11;
pub const WINDOW_SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;
pub const SCALE_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];
/// Per-scale statistics are floored here before exponentiation; below it they carry no gradient.
const STAT_FLOOR: f64 = 1e-8;

/// Smallest image side accepted for `scales` levels.
pub fn min_side(scales: usize) -> usize {
    (1usize << (scales.max(1) - 1)) * WINDOW
}

/// Exponents for the first `scales` levels, renormalized to sum to one.
pub fn scale_weights(scales: usize) -> Vec<f64> {
    let used = &SCALE_WEIGHTS[..scales];
    let total: f64 = used.iter().sum();
    used.iter().map(|w| w / total).collect()
}

#[derive(Debug, Clone)]
struct Gray {
    w: usize,
    h: usize,
    data: Vec<f64>,
}

impl Gray {
    fn zeros(w: usize, h: usize) -> Self {
        Self { w, h, data: vec![0.0; w * h] }
    }

    fn zip(&self, other: &Gray, f: impl Fn(f64, f64) -> f64) -> Gray {
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Gray { w: self.w, h: self.h, data }
    }
}

fn kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter, valid region only.
fn blur(img: &Gray, k: &[f64; WINDOW]) -> Gray {
    let ow = img.w + 1 - WINDOW;
    let oh = img.h + 1 - WINDOW;
    let mut tmp = Gray::zeros(ow, img.h);
    for r in 0..img.h {
        let row = &img.data[r * img.w..(r + 1) * img.w];
        for c in 0..ow {
            tmp.data[r * ow + c] = (0..WINDOW).map(|i| k[i] * row[c + i]).sum();
        }
    }
    let mut out = Gray::zeros(ow, oh);
    for r in 0..oh {
        for c in 0..ow {
            out.data[r * ow + c] = (0..WINDOW).map(|i| k[i] * tmp.data[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Adjoint of [`blur`] for an input of size `w × h`.
fn blur_adjoint(g: &Gray, w: usize, h: usize, k: &[f64; WINDOW]) -> Gray {
    let mut tmp = Gray::zeros(g.w, h);
    for r in 0..g.h {
        for c in 0..g.w {
            let v = g.data[r * g.w + c];
            for (i, ki) in k.iter().enumerate() {
                tmp.data[(r + i) * g.w + c] += ki * v;
            }
        }
    }
    let mut out = Gray::zeros(w, h);
    for r in 0..h {
        for c in 0..g.w {
            let v = tmp.data[r * g.w + c];
            for (i, ki) in k.iter().enumerate() {
                out.data[r * w + c + i] += ki * v;
            }
        }
    }
    out
}

/// 2×2 mean pooling; an odd trailing row or column is dropped.
fn pool(img: &Gray) -> Gray {
    let (w, h) = (img.w / 2, img.h / 2);
    let mut out = Gray::zeros(w, h);
    for r in 0..h {
        for c in 0..w {
            let i = 2 * r * img.w + 2 * c;
            out.data[r * w + c] = 0.25 * (img.data[i] + img.data[i + 1] + img.data[i + img.w] + img.data[i + img.w + 1]);
        }
    }
    out
}

fn pool_adjoint(g: &Gray, w: usize, h: usize) -> Gray {
    let mut out = Gray::zeros(w, h);
    for r in 0..g.h {
        for c in 0..g.w {
            let v = 0.25 * g.data[r * g.w + c];
            let i = 2 * r * w + 2 * c;
            out.data[i] += v;
            out.data[i + 1] += v;
            out.data[i + w] += v;
            out.data[i + w + 1] += v;
        }
    }
    out
}

/// Blurred first and second moments of the fixed image at one scale.
#[derive(Debug, Clone)]
struct Moments {
    x: Gray,
    mx: Gray,
    exx: Gray,
}

impl Moments {
    fn new(x: Gray, k: &[f64; WINDOW]) -> Self {
        let mx = blur(&x, k);
        let exx = blur(&x.zip(&x, |a, b| a * b), k);
        Self { x, mx, exx }
    }
}

/// Mean contrast-structure term (and mean SSIM when `full`) at one scale, with the gradient of
/// the returned statistic with respect to `y`.
fn scale_stat(fixed: &Moments, y: &Gray, k: &[f64; WINDOW], full: bool) -> (f64, Gray) {
    let Moments { x, mx, exx } = fixed;
    let my = blur(y, k);
    let eyy = blur(&y.zip(y, |a, b| a * b), k);
    let exy = blur(&x.zip(y, |a, b| a * b), k);
    let n = mx.data.len() as f64;
    let mut g_my = Gray::zeros(mx.w, mx.h);
    let mut g_eyy = Gray::zeros(mx.w, mx.h);
    let mut g_exy = Gray::zeros(mx.w, mx.h);
    let mut sum = 0.0;
    for i in 0..mx.data.len() {
        let (ux, uy) = (mx.data[i], my.data[i]);
        let sxx = exx.data[i] - ux * ux;
        let syy = eyy.data[i] - uy * uy;
        let sxy = exy.data[i] - ux * uy;
        let a2 = 2.0 * sxy + C2;
        let b2 = sxx + syy + C2;
        let cs = a2 / b2;
        // derivatives of cs with respect to (sxy, syy)
        let dcs_sxy = 2.0 / b2;
        let dcs_syy = -a2 / (b2 * b2);
        let (val, d_sxy, d_syy, d_uy) = if full {
            let a1 = 2.0 * ux * uy + C1;
            let b1 = ux * ux + uy * uy + C1;
            let l = a1 / b1;
            let dl_uy = 2.0 * ux / b1 - a1 * 2.0 * uy / (b1 * b1);
            (l * cs, l * dcs_sxy, l * dcs_syy, cs * dl_uy)
        } else {
            (cs, dcs_sxy, dcs_syy, 0.0)
        };
        sum += val;
        // sxy = exy - ux uy, syy = eyy - uy²
        g_exy.data[i] = d_sxy / n;
        g_eyy.data[i] = d_syy / n;
        g_my.data[i] = (d_uy - d_sxy * ux - d_syy * 2.0 * uy) / n;
    }
    let a = blur_adjoint(&g_my, y.w, y.h, k);
    let b = blur_adjoint(&g_eyy, y.w, y.h, k);
    let c = blur_adjoint(&g_exy, y.w, y.h, k);
    let mut gy = Gray::zeros(y.w, y.h);
    for i in 0..gy.data.len() {
        gy.data[i] = a.data[i] + 2.0 * y.data[i] * b.data[i] + x.data[i] * c.data[i];
    }
    (sum / n, gy)
}

/// Single-channel MS-SSIM against a cached pyramid and its gradient with respect to `y`.
fn ms_ssim_channel(fixed: &[Moments], y: Gray, k: &[f64; WINDOW]) -> (f64, Gray) {
    let scales = fixed.len();
    let weights = scale_weights(scales);
    let mut ys = vec![y];
    for _ in 1..scales {
        let ny = pool(ys.last().unwrap());
        ys.push(ny);
    }
    let mut stats = Vec::with_capacity(scales);
    let mut grads = Vec::with_capacity(scales);
    for s in 0..scales {
        let (v, g) = scale_stat(&fixed[s], &ys[s], k, s + 1 == scales);
        stats.push(v);
        grads.push(g);
    }
    let value: f64 = stats.iter().zip(&weights).map(|(&v, &w)| v.max(STAT_FLOOR).powf(w)).product();
    // propagate from the coarsest scale back to full resolution
    let mut acc: Option<Gray> = None;
    for s in (0..scales).rev() {
        let coef = if stats[s] > STAT_FLOOR { weights[s] * value / stats[s] } else { 0.0 };
        let mut g = grads[s].clone();
        g.data.iter_mut().for_each(|v| *v *= coef);
        if let Some(prev) = acc.take() {
            let up = pool_adjoint(&prev, ys[s].w, ys[s].h);
            g.data.iter_mut().zip(&up.data).for_each(|(a, b)| *a += b);
        }
        acc = Some(g);
    }
    (value, acc.unwrap())
}

/// Per-channel Gaussian pyramids of a fixed comparison image, built once per frame.
#[derive(Debug, Clone)]
pub struct MsSsimTarget {
    dims: (usize, usize),
    kernel: [f64; WINDOW],
    channels: [Vec<Moments>; 3],
}

impl MsSsimTarget {
    pub fn new(a: &RgbImage, scales: usize) -> Result<Self> {
        if scales == 0 || scales > SCALE_WEIGHTS.len() {
            return Err(Error::InvalidConfig("ms_ssim scales must be between 1 and 5"));
        }
        let needed = min_side(scales);
        let side = a.width.min(a.height);
        if side < needed {
            return Err(Error::TooSmall { needed, found: side });
        }
        let k = kernel();
        let (w, h) = a.dims();
        let channels = [0, 1, 2].map(|ch| {
            let mut x = Gray { w, h, data: a.data.iter().map(|p| p[ch]).collect() };
            let mut levels = Vec::with_capacity(scales);
            for _ in 1..scales {
                let next = pool(&x);
                levels.push(Moments::new(core::mem::replace(&mut x, next), &k));
            }
            levels.push(Moments::new(x, &k));
            levels
        });
        Ok(Self { dims: (w, h), kernel: k, channels })
    }

    /// `1 - MS-SSIM(target, b)` averaged across the color channels, gradient with respect to `b`.
    pub fn loss(&self, b: &RgbImage) -> Result<Graded<Vec<[f64; 3]>>> {
        check_dims(self.dims, b.dims())?;
        let (w, h) = self.dims;
        let mut grad = vec![[0.0; 3]; w * h];
        let mut total = 0.0;
        for (ch, fixed) in self.channels.iter().enumerate() {
            let y = Gray { w, h, data: b.data.iter().map(|p| p[ch]).collect() };
            let (v, g) = ms_ssim_channel(fixed, y, &self.kernel);
            total += v;
            for (dst, src) in grad.iter_mut().zip(&g.data) {
                dst[ch] = -src / 3.0;
            }
        }
        Ok(Graded { value: 1.0 - total / 3.0, grad })
    }
}

/// `1 - MS-SSIM(a, b)` over `scales` dyadic levels, averaged across the color channels.
/// The gradient is with respect to `b`.
pub fn ms_ssim_loss(a: &RgbImage, b: &RgbImage, scales: usize) -> Result<Graded<Vec<[f64; 3]>>> {
    check_dims(a.dims(), b.dims())?;
    MsSsimTarget::new(a, scales)?.loss(b)
}
