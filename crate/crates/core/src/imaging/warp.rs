use rayon::prelude::*;

use super::{check_dims, DisparityMap, ImageBuffer, ValidityMask};
use crate::error::{Error, Result};

/// Default left-right consistency threshold in pixels.
pub const DEFAULT_LR_THRESHOLD: f32 = 1.0;

/// Which way a disparity map transports pixels.
///
/// `LeftToRight`: the disparity lives in the left view and the left pixel at
/// column `j` corresponds to the right pixel at `j - d`. `RightToLeft`: the
/// disparity lives in the right view and column `j` corresponds to `j + d`
/// in the left view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    LeftToRight,
    RightToLeft,
}

impl WarpDirection {
    #[inline]
    fn sign(self) -> f64 {
        match self {
            WarpDirection::LeftToRight => -1.0,
            WarpDirection::RightToLeft => 1.0,
        }
    }
}

impl std::str::FromStr for WarpDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "left_to_right" | "l2r" | "left-to-right" => Ok(WarpDirection::LeftToRight),
            "right_to_left" | "r2l" | "right-to-left" => Ok(WarpDirection::RightToLeft),
            other => Err(Error::BadParams(format!("unknown warp direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tap {
    col: usize,
    /// Weight of `col + 1`; zero when the sample lands exactly on `col`.
    frac: f64,
}

/// Precomputed horizontal bilinear sampling positions for a disparity map.
///
/// The warp is linear in the sampled image, so the same plan gives both the
/// forward map and its adjoint (the gradient with respect to the sampled
/// image).
#[derive(Debug, Clone)]
pub struct WarpPlan {
    height: usize,
    width: usize,
    taps: Vec<Option<Tap>>,
}

impl WarpPlan {
    pub fn new(disparity: &DisparityMap, direction: WarpDirection) -> Self {
        let (h, w) = (disparity.height(), disparity.width());
        let sign = direction.sign();
        let taps = (0..h * w)
            .map(|idx| {
                let (i, j) = (idx / w, idx % w);
                let d = disparity.valid(i, j)? as f64;
                let x = j as f64 + sign * d;
                let x0 = x.floor();
                let frac = x - x0;
                if x0 < 0.0 || x0 > (w - 1) as f64 {
                    return None;
                }
                let col = x0 as usize;
                if frac > 0.0 && col + 1 > w - 1 {
                    return None;
                }
                Some(Tap { col, frac })
            })
            .collect();
        Self {
            height: h,
            width: w,
            taps,
        }
    }

    pub fn mask(&self) -> ValidityMask {
        ValidityMask {
            height: self.height,
            width: self.width,
            data: self.taps.iter().map(Option::is_some).collect(),
        }
    }

    /// Sample interleaved `values` (`channels` per pixel); invalid pixels get 0.
    pub fn apply(&self, values: &[f64], channels: usize) -> Vec<f64> {
        let w = self.width;
        let mut out = vec![0.0; self.taps.len() * channels];
        out.par_chunks_mut(w * channels)
            .enumerate()
            .for_each(|(i, row)| {
                for j in 0..w {
                    let Some(tap) = self.taps[i * w + j] else { continue };
                    let base = (i * w + tap.col) * channels;
                    for c in 0..channels {
                        let v0 = values[base + c];
                        row[j * channels + c] = if tap.frac > 0.0 {
                            (1.0 - tap.frac) * v0 + tap.frac * values[base + channels + c]
                        } else {
                            v0
                        };
                    }
                }
            });
        out
    }

    /// Transpose of [`WarpPlan::apply`]: scatters `grad_out` back onto the
    /// sampled image.
    pub fn adjoint(&self, grad_out: &[f64], channels: usize) -> Vec<f64> {
        let w = self.width;
        let mut grad = vec![0.0; self.taps.len() * channels];
        // Every tap reads from its own row, so rows are independent.
        grad.par_chunks_mut(w * channels)
            .enumerate()
            .for_each(|(i, row)| {
                for j in 0..w {
                    let Some(tap) = self.taps[i * w + j] else { continue };
                    let src = (i * w + j) * channels;
                    for c in 0..channels {
                        let g = grad_out[src + c];
                        if tap.frac > 0.0 {
                            row[tap.col * channels + c] += (1.0 - tap.frac) * g;
                            row[(tap.col + 1) * channels + c] += tap.frac * g;
                        } else {
                            row[tap.col * channels + c] += g;
                        }
                    }
                }
            });
        grad
    }
}

/// Bilinearly resample `target` into the frame of `disparity`.
pub fn backward_warp(
    target: &ImageBuffer,
    disparity: &DisparityMap,
    direction: WarpDirection,
) -> Result<(ImageBuffer, ValidityMask)> {
    check_dims(target.height(), target.width(), disparity.height(), disparity.width())?;
    let plan = WarpPlan::new(disparity, direction);
    let out = plan.apply(&target.to_f64(), target.channels());
    let img = ImageBuffer::from_clamped(
        target.height(),
        target.width(),
        target.channels(),
        out.into_iter().map(|v| v as f32).collect(),
    )?;
    Ok((img, plan.mask()))
}

/// Splat `source` along its own disparity with a nearest-column z-buffer.
///
/// The larger disparity (nearer surface) wins a collision; among equal
/// disparities the source pixel with the smaller column wins. Pixels no
/// source lands on are zero and masked false.
pub fn forward_warp(
    source: &ImageBuffer,
    disparity: &DisparityMap,
    direction: WarpDirection,
) -> Result<(ImageBuffer, ValidityMask)> {
    check_dims(source.height(), source.width(), disparity.height(), disparity.width())?;
    let (h, w, c) = (source.height(), source.width(), source.channels());
    let sign = direction.sign();
    let rows: Vec<(Vec<f32>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|i| {
            let mut depth = vec![f32::NEG_INFINITY; w];
            let mut from = vec![usize::MAX; w];
            for j in 0..w {
                let Some(d) = disparity.valid(i, j) else { continue };
                let x = (j as f64 + sign * d as f64).round();
                if x < 0.0 || x > (w - 1) as f64 {
                    continue;
                }
                let x = x as usize;
                if d > depth[x] {
                    depth[x] = d;
                    from[x] = j;
                }
            }
            let mut vals = vec![0.0f32; w * c];
            let mut hit = vec![false; w];
            for x in 0..w {
                if from[x] != usize::MAX {
                    hit[x] = true;
                    for ch in 0..c {
                        vals[x * c + ch] = source.get(i, from[x], ch);
                    }
                }
            }
            (vals, hit)
        })
        .collect();
    let mut data = Vec::with_capacity(h * w * c);
    let mut mask = Vec::with_capacity(h * w);
    for (vals, hit) in rows {
        data.extend(vals);
        mask.extend(hit);
    }
    Ok((ImageBuffer::new(h, w, c, data)?, ValidityMask::new(h, w, mask)?))
}

/// Left-right consistency of a left-referenced map against a right-referenced
/// one: a left pixel survives when its match `j - round(d)` is in bounds,
/// valid, and agrees within `tau` pixels.
pub fn lr_consistency_mask(
    disp_left: &DisparityMap,
    disp_right: &DisparityMap,
    tau: f32,
) -> Result<ValidityMask> {
    check_dims(disp_left.height(), disp_left.width(), disp_right.height(), disp_right.width())?;
    let (h, w) = (disp_left.height(), disp_left.width());
    let data = (0..h * w)
        .map(|idx| {
            let (i, j) = (idx / w, idx % w);
            let Some(dl) = disp_left.valid(i, j) else { return false };
            let x = j as f64 - (dl as f64).round();
            if x < 0.0 || x > (w - 1) as f64 {
                return false;
            }
            match disp_right.valid(i, x as usize) {
                Some(dr) => (dl - dr).abs() <= tau,
                None => false,
            }
        })
        .collect();
    ValidityMask::new(h, w, data)
}
