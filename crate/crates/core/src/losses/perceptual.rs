use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Graded;
use crate::error::Result;
use crate::geometry::{check_dims, RgbImage};
use crate::linalg::Vec3;

/// Softening of the channel normalization `φ / √(‖φ‖² + ε²)`; keeps the normalized feature
/// continuous as a feature vector shrinks to zero.
pub const FEATURE_EPS: f64 = 1e-3;

/// Channel-last feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![0.0; width * height * channels] }
    }
}

/// Multi-level feature extractor used by the perceptual loss.
pub trait FeaturePyramid {
    fn extract(&self, img: &RgbImage) -> Vec<FeatureMap>;
    /// Gradient with respect to the input pixels, given the maps `extract` returned for `img`
    /// and one cotangent map per level.
    fn backward(&self, img: &RgbImage, features: &[FeatureMap], level_grads: &[FeatureMap]) -> Vec<Vec3>;
}

#[derive(Debug, Clone)]
struct ConvLayer {
    cin: usize,
    cout: usize,
    stride: usize,
    /// `[tap][cin][cout]`, taps in row-major 3×3 order.
    forward_w: Vec<f64>,
    /// `[tap][cout][cin]`
    backward_w: Vec<f64>,
}

impl ConvLayer {
    /// `weights` laid out `[cout][cin][3][3]`.
    fn new(cin: usize, cout: usize, stride: usize, weights: &[f64]) -> Self {
        let mut forward_w = vec![0.0; 9 * cin * cout];
        let mut backward_w = vec![0.0; 9 * cin * cout];
        for o in 0..cout {
            for ci in 0..cin {
                for tap in 0..9 {
                    let w = weights[(o * cin + ci) * 9 + tap];
                    forward_w[(tap * cin + ci) * cout + o] = w;
                    backward_w[(tap * cout + o) * cin + ci] = w;
                }
            }
        }
        Self { cin, cout, stride, forward_w, backward_w }
    }

    fn out_dims(&self, w: usize, h: usize) -> (usize, usize) {
        ((w - 1) / self.stride + 1, (h - 1) / self.stride + 1)
    }

    /// Input pixel under tap `(dy, dx)` of output `(r, c)`, `None` in the zero padding.
    fn source(&self, input: &FeatureMap, r: usize, c: usize, dy: usize, dx: usize) -> Option<usize> {
        let ir = (r * self.stride + dy).checked_sub(1)?;
        let ic = (c * self.stride + dx).checked_sub(1)?;
        (ir < input.height && ic < input.width).then_some(ir * input.width + ic)
    }

    /// 3×3 convolution with zero padding 1, returning pre-activations.
    fn forward(&self, input: &FeatureMap) -> FeatureMap {
        let (ow, oh) = self.out_dims(input.width, input.height);
        let mut out = FeatureMap::zeros(ow, oh, self.cout);
        for r in 0..oh {
            for c in 0..ow {
                let dst = &mut out.data[(r * ow + c) * self.cout..(r * ow + c + 1) * self.cout];
                for tap in 0..9 {
                    let Some(src) = self.source(input, r, c, tap / 3, tap % 3) else { continue };
                    let x = &input.data[src * self.cin..(src + 1) * self.cin];
                    let w = &self.forward_w[tap * self.cin * self.cout..(tap + 1) * self.cin * self.cout];
                    for (&xv, wrow) in x.iter().zip(w.chunks_exact(self.cout)) {
                        for (d, &wv) in dst.iter_mut().zip(wrow) {
                            *d += wv * xv;
                        }
                    }
                }
            }
        }
        out
    }

    /// Gradient with respect to the layer input given the gradient of its pre-activations.
    fn backward(&self, input: &FeatureMap, g_out: &FeatureMap) -> FeatureMap {
        let mut g_in = FeatureMap::zeros(input.width, input.height, self.cin);
        for r in 0..g_out.height {
            for c in 0..g_out.width {
                let go = &g_out.data[(r * g_out.width + c) * self.cout..(r * g_out.width + c + 1) * self.cout];
                if go.iter().all(|&v| v == 0.0) {
                    continue;
                }
                for tap in 0..9 {
                    let Some(src) = self.source(input, r, c, tap / 3, tap % 3) else { continue };
                    let dst = &mut g_in.data[src * self.cin..(src + 1) * self.cin];
                    let w = &self.backward_w[tap * self.cin * self.cout..(tap + 1) * self.cin * self.cout];
                    for (&g, wrow) in go.iter().zip(w.chunks_exact(self.cin)) {
                        if g == 0.0 {
                            continue;
                        }
                        for (d, &wv) in dst.iter_mut().zip(wrow) {
                            *d += g * wv;
                        }
                    }
                }
            }
        }
        g_in
    }
}

/// Fixed random filter bank: five ReLU levels of 3×3 convolutions with 8, 16, 32, 32 and 32
/// channels, the first at full resolution and each later one with stride 2. He-scaled weights
/// drawn from a seeded generator, no biases.
#[derive(Debug, Clone)]
pub struct FilterBank {
    layers: Vec<ConvLayer>,
}

pub const FILTER_BANK_CHANNELS: [usize; 5] = [8, 16, 32, 32, 32];

impl FilterBank {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cin = 3;
        let mut layers = Vec::new();
        for (l, &cout) in FILTER_BANK_CHANNELS.iter().enumerate() {
            let std = (2.0 / (cin as f64 * 9.0)).sqrt();
            let normal = Normal::new(0.0, std).expect("positive standard deviation");
            let weights: Vec<f64> = (0..cout * cin * 9).map(|_| normal.sample(&mut rng)).collect();
            layers.push(ConvLayer::new(cin, cout, if l == 0 { 1 } else { 2 }, &weights));
            cin = cout;
        }
        Self { layers }
    }

    fn input_map(img: &RgbImage) -> FeatureMap {
        let data = img.data.iter().flat_map(|p| p.iter().copied()).collect();
        FeatureMap { width: img.width, height: img.height, channels: 3, data }
    }

}

impl FeaturePyramid for FilterBank {
    fn extract(&self, img: &RgbImage) -> Vec<FeatureMap> {
        let mut levels: Vec<FeatureMap> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let mut z = match levels.last() {
                Some(x) => layer.forward(x),
                None => layer.forward(&Self::input_map(img)),
            };
            z.data.iter_mut().for_each(|v| *v = v.max(0.0));
            levels.push(z);
        }
        levels
    }

    fn backward(&self, img: &RgbImage, features: &[FeatureMap], level_grads: &[FeatureMap]) -> Vec<Vec3> {
        let input = Self::input_map(img);
        let mut carried: Option<FeatureMap> = None;
        for l in (0..self.layers.len()).rev() {
            // gradient with respect to the post-ReLU output of level l
            let mut g = level_grads[l].clone();
            if let Some(c) = carried.take() {
                g.data.iter_mut().zip(&c.data).for_each(|(a, b)| *a += b);
            }
            // a zero output means a non-positive pre-activation
            for (gv, &f) in g.data.iter_mut().zip(&features[l].data) {
                if f <= 0.0 {
                    *gv = 0.0;
                }
            }
            let layer_input = if l == 0 { &input } else { &features[l - 1] };
            carried = Some(self.layers[l].backward(layer_input, &g));
        }
        let g = carried.expect("filter bank has layers");
        g.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect()
    }
}

/// Per-pixel normalization `v / √(‖v‖² + ε²)` of every level.
fn normalize(f: &FeatureMap) -> FeatureMap {
    let mut out = f.clone();
    for px in out.data.chunks_exact_mut(f.channels) {
        let n = (px.iter().map(|v| v * v).sum::<f64>() + FEATURE_EPS * FEATURE_EPS).sqrt();
        px.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// Features of the fixed comparison image, normalized once and reused across evaluations.
#[derive(Debug, Clone)]
pub struct PerceptualTarget {
    levels: Vec<FeatureMap>,
    dims: (usize, usize),
}

impl PerceptualTarget {
    pub fn new(img: &RgbImage, extractor: &dyn FeaturePyramid) -> Self {
        Self { levels: extractor.extract(img).iter().map(normalize).collect(), dims: img.dims() }
    }

    /// `Σ_l mean_j ‖φ̂_j(target) - φ̂_j(img)‖²` with the gradient with respect to `img`.
    pub fn loss(&self, img: &RgbImage, extractor: &dyn FeaturePyramid) -> Result<Graded<Vec<Vec3>>> {
        check_dims(self.dims, img.dims())?;
        let feats = extractor.extract(img);
        let mut value = 0.0;
        let mut grads = Vec::with_capacity(feats.len());
        for (f, t) in feats.iter().zip(&self.levels) {
            check_dims((t.width, t.height), (f.width, f.height))?;
            let n_px = (f.width * f.height) as f64;
            let mut g = FeatureMap::zeros(f.width, f.height, f.channels);
            let mut level_sum = 0.0;
            for ((v, tv), gv) in f
                .data
                .chunks_exact(f.channels)
                .zip(t.data.chunks_exact(f.channels))
                .zip(g.data.chunks_exact_mut(f.channels))
            {
                let sq: f64 = v.iter().map(|x| x * x).sum();
                let n = (sq + FEATURE_EPS * FEATURE_EPS).sqrt();
                // d = v/n - t, loss += ‖d‖²; ∂/∂v = (2/n)(d - (v/n)(v/n·d))
                let mut dot = 0.0;
                for k in 0..f.channels {
                    let d = v[k] / n - tv[k];
                    level_sum += d * d;
                    dot += v[k] / n * d;
                }
                for k in 0..f.channels {
                    let d = v[k] / n - tv[k];
                    gv[k] = 2.0 / (n * n_px) * (d - v[k] / n * dot);
                }
            }
            value += level_sum / n_px;
            grads.push(g);
        }
        let grad = extractor.backward(img, &feats, &grads);
        Ok(Graded { value, grad })
    }
}

/// Perceptual distance between `a` and `b`, gradient with respect to `b`.
pub fn perceptual_loss(a: &RgbImage, b: &RgbImage, extractor: &dyn FeaturePyramid) -> Result<Graded<Vec<Vec3>>> {
    check_dims(a.dims(), b.dims())?;
    PerceptualTarget::new(a, extractor).loss(b, extractor)
}
