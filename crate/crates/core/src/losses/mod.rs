//! Photometric, warp-consistency, and velocity losses with gradients with
//! respect to the predicted image or velocity.
//!
//! All ℓ1 terms are mean-reduced over pixels and channels.

mod ssim;

pub use ssim::{gaussian_taps, reflect, ssim, SsimValue, C1, C2, SIGMA, WINDOW};

use serde::{Deserialize, Serialize};

use crate::diffusion::Latent;
use crate::error::{Error, Result};
use crate::imaging::{DisparityMap, ImageBuffer, ValidityMask, WarpDirection, WarpPlan};
use crate::numeric::pairwise_sum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    /// SSIM share of the photometric loss.
    pub alpha: f64,
    pub lambda_pix: f64,
    pub lambda_warp: f64,
    /// Clamp for min-SNR loss weighting.
    pub gamma_snr: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha: 0.85,
            lambda_pix: 1.0,
            lambda_warp: 0.3,
            gamma_snr: 5.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::BadParams(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.lambda_pix >= 0.0 && self.lambda_warp >= 0.0) {
            return Err(Error::BadParams("loss weights must be non-negative".into()));
        }
        if !(self.gamma_snr > 0.0) {
            return Err(Error::BadParams("gamma_snr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// Same layout as the differentiated argument.
    pub gradient: Option<Vec<f64>>,
}

impl LossValue {
    pub fn scalar(value: f64) -> Self {
        Self {
            value,
            gradient: None,
        }
    }
}

/// `alpha * (1 - SSIM) + (1 - alpha) * mean |pred - target|`.
pub fn pixel_loss(pred: &ImageBuffer, target: &ImageBuffer, w: &LossWeights) -> Result<LossValue> {
    pred.same_shape(target)?;
    w.validate()?;
    let n = pred.len() as f64;
    let residuals: Vec<f64> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| p as f64 - t as f64)
        .collect();
    let l1 = pairwise_sum(&residuals.iter().map(|r| r.abs()).collect::<Vec<_>>()) / n;
    let mut gradient: Vec<f64> = residuals
        .iter()
        .map(|r| (1.0 - w.alpha) * sign(*r) / n)
        .collect();
    let mut value = (1.0 - w.alpha) * l1;
    if w.alpha > 0.0 {
        let s = ssim(pred, target)?;
        value += w.alpha * (1.0 - s.value);
        for (g, gs) in gradient.iter_mut().zip(&s.gradient) {
            *g -= w.alpha * gs;
        }
    }
    Ok(LossValue {
        value,
        gradient: Some(gradient),
    })
}

/// Masked mean ℓ1 between `pred_target` warped into the source frame and
/// `source`.
///
/// `direction` is [`WarpDirection::LeftToRight`] when the source is the
/// left view. The effective mask is `mask` restricted to pixels whose
/// bilinear footprint stays inside the image.
pub fn warp_loss(
    pred_target: &ImageBuffer,
    source: &ImageBuffer,
    disp_source: &DisparityMap,
    mask: &ValidityMask,
    direction: WarpDirection,
) -> Result<LossValue> {
    pred_target.same_shape(source)?;
    crate::imaging::check_dims(source.height(), source.width(), disp_source.height(), disp_source.width())?;
    crate::imaging::check_dims(source.height(), source.width(), mask.height(), mask.width())?;
    let plan = WarpPlan::new(disp_source, direction);
    let mask = mask.and(&plan.mask())?;
    let count = mask.count();
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    let c = source.channels();
    let warped = plan.apply(&pred_target.to_f64(), c);
    let norm = (count * c) as f64;
    let mut abs = vec![0.0; warped.len()];
    let mut grad_out = vec![0.0; warped.len()];
    for (p, &m) in mask.data().iter().enumerate() {
        if !m {
            continue;
        }
        for ch in 0..c {
            let k = p * c + ch;
            let r = warped[k] - source.data()[k] as f64;
            abs[k] = r.abs();
            grad_out[k] = sign(r) / norm;
        }
    }
    Ok(LossValue {
        value: pairwise_sum(&abs) / norm,
        gradient: Some(plan.adjoint(&grad_out, c)),
    })
}

/// `v = sqrt(ᾱ) ε − sqrt(1 − ᾱ) x₀`.
pub fn velocity_target(x0: &Latent, eps: &Latent, alpha_bar: f64) -> Result<Latent> {
    x0.same_shape(eps)?;
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidRange(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    let (sa, sb) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(x0.zip_map(eps, |x, e| sa * e - sb * x))
}

/// Mean squared error, optionally scaled by a min-SNR weight.
pub fn velocity_loss(v_pred: &Latent, v_true: &Latent, snr_weight: Option<f64>) -> Result<LossValue> {
    v_pred.same_shape(v_true)?;
    let weight = snr_weight.unwrap_or(1.0);
    let n = v_pred.len() as f64;
    let diff: Vec<f64> = v_pred.data().iter().zip(v_true.data()).map(|(p, t)| p - t).collect();
    let sq: Vec<f64> = diff.iter().map(|d| d * d).collect();
    Ok(LossValue {
        value: weight * pairwise_sum(&sq) / n,
        gradient: Some(diff.iter().map(|d| 2.0 * d * weight / n).collect()),
    })
}

/// Weighted objective. The velocity gradient and the image gradient refer to
/// different buffers, so they are kept apart.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalLoss {
    pub value: f64,
    pub grad_velocity: Option<Vec<f64>>,
    pub grad_image: Option<Vec<f64>>,
}

/// `l_vel + λ_pix l_pix + λ_warp l_warp`; absent terms contribute nothing.
pub fn total_loss(
    l_vel: Option<&LossValue>,
    l_pix: &LossValue,
    l_warp: Option<&LossValue>,
    w: &LossWeights,
) -> Result<TotalLoss> {
    let mut value = w.lambda_pix * l_pix.value;
    if let Some(l) = l_warp {
        value += w.lambda_warp * l.value;
    }
    if let Some(l) = l_vel {
        value += l.value;
    }

    let mut grad_image = l_pix
        .gradient
        .as_ref()
        .map(|g| g.iter().map(|v| w.lambda_pix * v).collect::<Vec<_>>());
    if let Some(gw) = l_warp.and_then(|l| l.gradient.as_ref()) {
        match &mut grad_image {
            Some(g) => {
                if g.len() != gw.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "pixel gradient has {} entries, warp gradient {}",
                        g.len(),
                        gw.len()
                    )));
                }
                for (a, b) in g.iter_mut().zip(gw) {
                    *a += w.lambda_warp * b;
                }
            }
            None => grad_image = Some(gw.iter().map(|v| w.lambda_warp * v).collect()),
        }
    }
    Ok(TotalLoss {
        value,
        grad_velocity: l_vel.and_then(|l| l.gradient.clone()),
        grad_image,
    })
}

#[inline]
fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}
