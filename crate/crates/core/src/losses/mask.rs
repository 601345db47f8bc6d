use alloc::vec;
use alloc::vec::Vec;


use super::{Graded, LossWeights};
use num_traits::Float;

use crate::error::{Error, Result};
use crate::geometry::{pos_neg_split, Mask, MASK_THRESHOLD};

/// Probability clamp applied to predicted masks before taking logarithms.
pub const RWCE_EPS: f64 = 1e-7;

/// Reweighted cross-entropy: positive and negative pixels of the pseudo mask are averaged
/// separately so a small object does not drown in background. The gradient is with respect
/// to `pred`; pixels that hit the clamp get zero gradient.
pub fn rwce(pseudo: &Mask, pred: &Mask) -> Result<Graded<Vec<f64>>> {
    pseudo.ensure_same_dims(pred)?;
    let (pos, neg) = pos_neg_split(pseudo, MASK_THRESHOLD);
    if pos.is_empty() {
        return Err(Error::EmptyRegion("positive"));
    }
    if neg.is_empty() {
        return Err(Error::EmptyRegion("negative"));
    }
    let mut grad = vec![0.0; pred.data.len()];
    let np = pos.len() as f64;
    let nn = neg.len() as f64;
    let mut pos_sum = 0.0;
    for &j in &pos {
        let m = pred.data[j];
        let c = m.clamp(RWCE_EPS, 1.0 - RWCE_EPS);
        pos_sum += pseudo.data[j] * c.ln();
        if c == m {
            grad[j] = -pseudo.data[j] / (m * np);
        }
    }
    let mut neg_sum = 0.0;
    for &j in &neg {
        let m = pred.data[j];
        let c = m.clamp(RWCE_EPS, 1.0 - RWCE_EPS);
        neg_sum += (1.0 - c).ln();
        if c == m {
            grad[j] = 1.0 / ((1.0 - m) * nn);
        }
    }
    Ok(Graded { value: -pos_sum / np - neg_sum / nn, grad })
}

/// Which pseudo mask supervises the rendered silhouette.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskTarget {
    /// The rendered mask is amodal, so it is compared with the amodal pseudo mask.
    #[default]
    Amodal,
    /// Ablation: compare with the visible pseudo mask instead.
    Visible,
}

/// Masks predicted by an upstream network, supervised by the pseudo masks for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskHeads {
    pub vis: Mask,
    pub amodal: Mask,
}

/// The three weighted mask terms. Only the rendered-mask term carries a gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskLoss {
    pub rendered: f64,
    pub head_amodal: Option<f64>,
    pub head_vis: Option<f64>,
    /// Weighted gradient with respect to the rendered mask.
    pub grad: Vec<f64>,
}

impl MaskLoss {
    pub fn value(&self, w: &LossWeights) -> f64 {
        w.lambda1 * self.rendered
            + self.head_amodal.map_or(0.0, |v| w.lambda2 * v)
            + self.head_vis.map_or(0.0, |v| w.lambda3 * v)
    }
}

/// `λ1·rwce(M̃, M^R) + λ2·rwce(M̃_amodal, M̂_amodal) + λ3·rwce(M̃_vis, M̂_vis)`; the head
/// terms are evaluated only when `heads` is given.
pub fn mask_loss(
    target: &Mask,
    pseudo_vis: &Mask,
    pseudo_amodal: &Mask,
    heads: Option<&MaskHeads>,
    rendered: &Mask,
    w: &LossWeights,
) -> Result<MaskLoss> {
    let main = rwce(target, rendered)?;
    let (head_amodal, head_vis) = match heads {
        Some(h) => (Some(rwce(pseudo_amodal, &h.amodal)?.value), Some(rwce(pseudo_vis, &h.vis)?.value)),
        None => (None, None),
    };
    let grad = main.grad.iter().map(|g| w.lambda1 * g).collect();
    Ok(MaskLoss { rendered: main.value, head_amodal, head_vis, grad })
}
