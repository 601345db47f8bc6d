use alloc::vec;
use alloc::vec::Vec;


use super::Graded;
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{check_dims, pos_neg_split, Mask, RgbImage, MASK_THRESHOLD};
use crate::linalg::{self, Mat3, Vec3};

/// Linear sRGB to XYZ under the D65 white point.
const SRGB_TO_XYZ: Mat3 = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const DELTA: f64 = 6.0 / 29.0;

fn white() -> Vec3 {
    SRGB_TO_XYZ.map(|row| row[0] + row[1] + row[2])
}

/// sRGB transfer inverse and its derivative.
fn linearize(c: f64) -> (f64, f64) {
    if c <= 0.04045 {
        (c / 12.92, 1.0 / 12.92)
    } else {
        let base = (c + 0.055) / 1.055;
        (base.powf(2.4), 2.4 / 1.055 * base.powf(1.4))
    }
}

/// CIELAB companding function and its derivative.
fn lab_f(t: f64) -> (f64, f64) {
    if t > DELTA * DELTA * DELTA {
        let c = t.cbrt();
        (c, 1.0 / (3.0 * c * c))
    } else {
        (t / (3.0 * DELTA * DELTA) + 4.0 / 29.0, 1.0 / (3.0 * DELTA * DELTA))
    }
}

/// Full CIELAB `(L, a, b)` of an sRGB color.
pub fn srgb_to_lab(rgb: Vec3) -> Vec3 {
    let lin = rgb.map(|c| linearize(c).0);
    let xyz = linalg::mat_vec(&SRGB_TO_XYZ, lin);
    let wp = white();
    let f = [0, 1, 2].map(|k| lab_f(xyz[k] / wp[k]).0);
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

/// The `a, b` channels mapped into `[0, 1]` by `(ch + 128) / 255`, with the Jacobian rows
/// `∂ab / ∂rgb`.
pub fn ab_channels(rgb: Vec3) -> ([f64; 2], [Vec3; 2]) {
    let wp = white();
    let mut lin = [0.0; 3];
    let mut dlin = [0.0; 3];
    for k in 0..3 {
        (lin[k], dlin[k]) = linearize(rgb[k]);
    }
    let xyz = linalg::mat_vec(&SRGB_TO_XYZ, lin);
    let mut f = [0.0; 3];
    let mut df = [0.0; 3];
    for k in 0..3 {
        (f[k], df[k]) = lab_f(xyz[k] / wp[k]);
    }
    let ab = [(500.0 * (f[0] - f[1]) + 128.0) / 255.0, (200.0 * (f[1] - f[2]) + 128.0) / 255.0];
    // ∂f_i/∂rgb_k = f'_i / wp_i · M[i][k] · lin'_k
    let dfi = |i: usize| -> Vec3 { [0, 1, 2].map(|k| df[i] / wp[i] * SRGB_TO_XYZ[i][k] * dlin[k]) };
    let (d0, d1, d2) = (dfi(0), dfi(1), dfi(2));
    let jac = [
        linalg::scale(linalg::sub(d0, d1), 500.0 / 255.0),
        linalg::scale(linalg::sub(d1, d2), 200.0 / 255.0),
    ];
    (ab, jac)
}

/// Sensor-side `a, b` values over `Pos(mask_vis)`, computed once per frame.
#[derive(Debug, Clone)]
pub struct LabTarget {
    dims: (usize, usize),
    pos: Vec<usize>,
    /// Sensor `a, b` multiplied by the mask value, one entry per positive pixel.
    target: Vec<[f64; 2]>,
}

impl LabTarget {
    pub fn new(sensor: &RgbImage, mask_vis: &Mask) -> Result<Self> {
        check_dims(sensor.dims(), mask_vis.dims())?;
        let (pos, _) = pos_neg_split(mask_vis, MASK_THRESHOLD);
        if pos.is_empty() {
            return Err(Error::EmptyRegion("positive"));
        }
        let target = pos
            .iter()
            .map(|&j| {
                let m = mask_vis.data[j];
                ab_channels(sensor.data[j]).0.map(|v| v * m)
            })
            .collect();
        Ok(Self { dims: sensor.dims(), pos, target })
    }

    /// Mean L1 distance to the rendered `a, b` channels, gradient with respect to `rendered`.
    pub fn loss(&self, rendered: &RgbImage) -> Result<Graded<Vec<Vec3>>> {
        check_dims(self.dims, rendered.dims())?;
        let n = self.pos.len() as f64;
        let mut grad = vec![[0.0; 3]; rendered.data.len()];
        let mut sum = 0.0;
        for (&j, s_ab) in self.pos.iter().zip(&self.target) {
            let (r_ab, jac) = ab_channels(rendered.data[j]);
            for c in 0..2 {
                let diff = s_ab[c] - r_ab[c];
                sum += diff.abs();
                // d|s - r|/dr = -sign(s - r)
                let sign = if diff > 0.0 {
                    -1.0
                } else if diff < 0.0 {
                    1.0
                } else {
                    0.0
                };
                grad[j] = linalg::add(grad[j], linalg::scale(jac[c], sign / n));
            }
        }
        Ok(Graded { value: sum / n, grad })
    }
}

/// Mean L1 distance of the scaled `a, b` channels over `Pos(mask_vis)`, with the sensor's
/// channels multiplied by the mask value. Gradient is with respect to `rendered`.
pub fn lab_loss(sensor: &RgbImage, rendered: &RgbImage, mask_vis: &Mask) -> Result<Graded<Vec<Vec3>>> {
    check_dims(sensor.dims(), rendered.dims())?;
    LabTarget::new(sensor, mask_vis)?.loss(rendered)
}
