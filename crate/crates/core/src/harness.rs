//! Leakage-free evaluation protocol: per-scene scale calibration, pair
//! metrics, the symmetric consistency score, resizing, and dataset-mixing
//! arithmetic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{DisparityMap, ImageBuffer, WarpDirection, WarpPlan};
use crate::losses::ssim;
use crate::matching::{sgbm, SgbmParams};
use crate::numeric::pairwise_sum;

/// Largest accepted side for [`resize_center_crop`].
pub const MAX_TARGET: usize = 8192;

/// Disparity maps compared during calibration and evaluation.
pub const MATCHING_CONVENTION: &str = "(real_left, real_right) vs (real_left, synth_right), left-referenced";

/// Synthesizes the counterpart view of `source` at a given scale.
///
/// Implementations must be deterministic and return an image shaped like
/// `source`. The protocol never hands them the real right view or any
/// ground-truth geometry.
pub trait GeneratorInterface: Sync {
    fn generate(&self, source: &ImageBuffer, scale: f64) -> Result<ImageBuffer>;
}

impl<F> GeneratorInterface for F
where
    F: Fn(&ImageBuffer, f64) -> Result<ImageBuffer> + Sync,
{
    fn generate(&self, source: &ImageBuffer, scale: f64) -> Result<ImageBuffer> {
        self(source, scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub lo: f64,
    pub hi: f64,
    pub levels: usize,
    pub samples_per_level: usize,
    pub shrink: f64,
    pub min_joint_valid: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            lo: 0.025,
            hi: 1.0,
            levels: 3,
            samples_per_level: 16,
            shrink: 4.0,
            min_joint_valid: 0.05,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidRange(format!(
                "search bounds need lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.levels == 0 {
            return Err(Error::BadParams("levels must be at least 1".into()));
        }
        if self.samples_per_level < 3 {
            return Err(Error::BadParams("samples_per_level must be at least 3".into()));
        }
        if !(self.shrink > 1.0) {
            return Err(Error::BadParams(format!("shrink must exceed 1, got {}", self.shrink)));
        }
        if !(0.0..=1.0).contains(&self.min_joint_valid) {
            return Err(Error::BadParams("min_joint_valid must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub level: usize,
    pub scale: f64,
    /// `None` when the maps share no valid pixel.
    pub rmse: Option<f64>,
    pub joint_valid_fraction: f64,
}

impl TraceEntry {
    fn eligible(&self, min_joint_valid: f64) -> Option<f64> {
        self.rmse.filter(|_| self.joint_valid_fraction >= min_joint_valid)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub best_scale: f64,
    pub best_rmse: f64,
    /// Grid spacing of the last level searched.
    pub final_step: f64,
    pub trace: Vec<TraceEntry>,
}

/// RMSE over pixels valid in both maps, with the fraction of such pixels.
pub fn disparity_rmse(d_real: &DisparityMap, d_synth: &DisparityMap) -> Result<(f64, f64)> {
    if d_real.height() != d_synth.height() || d_real.width() != d_synth.width() {
        return Err(Error::ShapeMismatch(format!(
            "disparity {}x{} vs {}x{}",
            d_real.height(),
            d_real.width(),
            d_synth.height(),
            d_synth.width()
        )));
    }
    let sq: Vec<f64> = d_real
        .data()
        .iter()
        .zip(d_synth.data())
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| {
            let r = a as f64 - b as f64;
            r * r
        })
        .collect();
    if sq.is_empty() {
        return Err(Error::NoJointValid);
    }
    let total = d_real.data().len() as f64;
    Ok(((pairwise_sum(&sq) / sq.len() as f64).sqrt(), sq.len() as f64 / total))
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let step = (b - a) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { b } else { a + step * k as f64 })
        .collect()
}

fn better(candidate: (f64, f64), incumbent: Option<(f64, f64)>) -> bool {
    match incumbent {
        None => true,
        Some((scale, rmse)) => {
            candidate.1 < rmse || (candidate.1 == rmse && candidate.0 < scale)
        }
    }
}

/// Coarse-to-fine search for the generator scale whose synthesized right view
/// best reproduces the SGBM disparity of the real pair.
pub fn calibrate_scale(
    real_left: &ImageBuffer,
    real_right: &ImageBuffer,
    gen: &dyn GeneratorInterface,
    sgbm_params: &SgbmParams,
    cfg: &SearchConfig,
) -> Result<CalibrationResult> {
    cfg.validate()?;
    real_left.same_shape(real_right)?;
    let (d_real, _) = sgbm(real_left, real_right, sgbm_params)?;

    let mut trace = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    let (mut a, mut b) = (cfg.lo, cfg.hi);
    let mut final_step = 0.0;

    for level in 0..cfg.levels {
        if level > 0 {
            let center = best.map_or(0.5 * (cfg.lo + cfg.hi), |(s, _)| s);
            let half = 0.5 * (cfg.hi - cfg.lo) / cfg.shrink.powi(level as i32);
            a = (center - half).max(cfg.lo);
            b = (center + half).min(cfg.hi);
        }
        let scales = linspace(a, b, cfg.samples_per_level);
        final_step = (b - a) / (cfg.samples_per_level - 1) as f64;

        let entries = scales
            .par_iter()
            .map(|&scale| -> Result<TraceEntry> {
                let synth = gen.generate(real_left, scale)?;
                real_left.same_shape(&synth)?;
                let (d_synth, _) = sgbm(real_left, &synth, sgbm_params)?;
                let (rmse, joint_valid_fraction) = match disparity_rmse(&d_real, &d_synth) {
                    Ok((r, f)) => (Some(r), f),
                    Err(Error::NoJointValid) => (None, 0.0),
                    Err(e) => return Err(e),
                };
                Ok(TraceEntry {
                    level,
                    scale,
                    rmse,
                    joint_valid_fraction,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        for e in &entries {
            if let Some(rmse) = e.eligible(cfg.min_joint_valid) {
                if better((e.scale, rmse), best) {
                    best = Some((e.scale, rmse));
                }
            }
        }
        trace.extend(entries);
    }

    let (best_scale, best_rmse) = best.ok_or(Error::AllCandidatesInvalid)?;
    Ok(CalibrationResult {
        best_scale,
        best_rmse,
        final_step,
        trace,
    })
}

/// One minus the mean of both directed similarities; lower is better.
pub fn symmetric_score(s12: f64, s21: f64) -> f64 {
    1.0 - 0.5 * (s12 + s21)
}

/// Similarity of view `a` to view `b` after pulling `b` into `a`'s frame
/// with `a`'s disparity.
pub trait Similarity: Sync {
    fn name(&self) -> &'static str;
    fn similarity(
        &self,
        a: &ImageBuffer,
        b: &ImageBuffer,
        disp_a: &DisparityMap,
        direction: WarpDirection,
    ) -> Result<f64>;
}

/// Mean cosine between luminance-gradient vectors of `a` and warped `b`.
///
/// Pixels whose gradient is below `min_norm` in either view do not count.
/// With no counted pixel the similarity is 0.
#[derive(Debug, Clone, Copy)]
pub struct GradientCosine {
    pub min_norm: f64,
}

impl Default for GradientCosine {
    fn default() -> Self {
        Self { min_norm: 1e-3 }
    }
}

fn gradient_features(img: &ImageBuffer) -> Vec<f64> {
    let (h, w) = (img.height(), img.width());
    let lum = img.luminance();
    let at = |i: usize, j: usize| lum[i * w + j] as f64;
    let mut out = vec![0.0; h * w * 2];
    for i in 0..h {
        for j in 0..w {
            let (jl, jr) = (j.saturating_sub(1), (j + 1).min(w - 1));
            let (iu, id) = (i.saturating_sub(1), (i + 1).min(h - 1));
            out[(i * w + j) * 2] = (at(i, jr) - at(i, jl)) * 0.5;
            out[(i * w + j) * 2 + 1] = (at(id, j) - at(iu, j)) * 0.5;
        }
    }
    out
}

impl Similarity for GradientCosine {
    fn name(&self) -> &'static str {
        "gradient_cosine"
    }

    fn similarity(
        &self,
        a: &ImageBuffer,
        b: &ImageBuffer,
        disp_a: &DisparityMap,
        direction: WarpDirection,
    ) -> Result<f64> {
        a.same_shape(b)?;
        crate::imaging::check_dims(a.height(), a.width(), disp_a.height(), disp_a.width())?;
        let fa = gradient_features(a);
        let plan = WarpPlan::new(disp_a, direction);
        let fb = plan.apply(&gradient_features(b), 2);
        let mask = plan.mask();
        let cos: Vec<f64> = mask
            .data()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .filter_map(|(p, _)| {
                let (ax, ay) = (fa[2 * p], fa[2 * p + 1]);
                let (bx, by) = (fb[2 * p], fb[2 * p + 1]);
                let na = ax.hypot(ay);
                let nb = bx.hypot(by);
                (na >= self.min_norm && nb >= self.min_norm).then(|| (ax * bx + ay * by) / (na * nb))
            })
            .collect();
        if cos.is_empty() {
            return Ok(0.0);
        }
        Ok(pairwise_sum(&cos) / cos.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// `None` when the images are identical.
    pub psnr: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub disparity_rmse: Option<f64>,
    pub joint_valid_fraction: f64,
    pub surrogate_consistency: f64,
    pub similarity: String,
    pub convention: String,
    pub sgbm: SgbmParams,
}

/// Peak signal-to-noise ratio on the unit range; `None` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<Option<f64>> {
    a.same_shape(b)?;
    let sq: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let r = x as f64 - y as f64;
            r * r
        })
        .collect();
    let mse = pairwise_sum(&sq) / sq.len() as f64;
    if mse == 0.0 {
        return Ok(None);
    }
    Ok(Some(-10.0 * mse.log10()))
}

/// Metrics for one scene with the default gradient-cosine similarity.
pub fn evaluate_pair(
    real_left: &ImageBuffer,
    real_right: &ImageBuffer,
    synth_right: &ImageBuffer,
    params: &SgbmParams,
) -> Result<EvalRecord> {
    evaluate_pair_with(real_left, real_right, synth_right, params, &GradientCosine::default())
}

pub fn evaluate_pair_with(
    real_left: &ImageBuffer,
    real_right: &ImageBuffer,
    synth_right: &ImageBuffer,
    params: &SgbmParams,
    similarity: &dyn Similarity,
) -> Result<EvalRecord> {
    real_left.same_shape(real_right)?;
    real_right.same_shape(synth_right)?;

    let psnr = psnr(synth_right, real_right)?;
    let ssim = ssim(synth_right, real_right)?.value;

    let (d_real, _) = sgbm(real_left, real_right, params)?;
    let (d_synth_l, d_synth_r) = sgbm(real_left, synth_right, params)?;
    let (disparity_rmse, joint_valid_fraction) = match disparity_rmse(&d_real, &d_synth_l) {
        Ok((r, f)) => (Some(r), f),
        Err(Error::NoJointValid) => (None, 0.0),
        Err(e) => return Err(e),
    };

    let s12 = similarity.similarity(real_left, synth_right, &d_synth_l, WarpDirection::LeftToRight)?;
    let s21 = similarity.similarity(synth_right, real_left, &d_synth_r, WarpDirection::RightToLeft)?;

    Ok(EvalRecord {
        psnr,
        psnr_infinite: psnr.is_none(),
        ssim,
        disparity_rmse,
        joint_valid_fraction,
        surrogate_consistency: symmetric_score(s12, s21),
        similarity: similarity.name().to_string(),
        convention: MATCHING_CONVENTION.to_string(),
        sgbm: *params,
    })
}

/// Unweighted per-scene means; absent values are skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub scenes: usize,
    pub psnr_mean: Option<f64>,
    pub psnr_infinite_count: usize,
    pub ssim_mean: Option<f64>,
    pub disparity_rmse_mean: Option<f64>,
    pub surrogate_consistency_mean: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| pairwise_sum(&v) / v.len() as f64)
}

pub fn summarize(records: &[EvalRecord]) -> EvalSummary {
    EvalSummary {
        scenes: records.len(),
        psnr_mean: mean_of(records.iter().filter_map(|r| r.psnr)),
        psnr_infinite_count: records.iter().filter(|r| r.psnr_infinite).count(),
        ssim_mean: mean_of(records.iter().map(|r| r.ssim)),
        disparity_rmse_mean: mean_of(records.iter().filter_map(|r| r.disparity_rmse)),
        surrogate_consistency_mean: mean_of(records.iter().map(|r| r.surrogate_consistency)),
    }
}

/// Scale so the image covers the target, bilinear resample with half-pixel
/// centers, then crop the center. Odd remainders crop one more pixel from
/// the far side.
pub fn resize_center_crop(img: &ImageBuffer, target_h: usize, target_w: usize) -> Result<ImageBuffer> {
    if target_h == 0 || target_w == 0 || target_h > MAX_TARGET || target_w > MAX_TARGET {
        return Err(Error::BadTarget(format!(
            "target {target_h}x{target_w} outside 1..={MAX_TARGET}"
        )));
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    if h == 0 || w == 0 {
        return Err(Error::BadTarget("empty input image".into()));
    }
    let s = (target_h as f64 / h as f64).max(target_w as f64 / w as f64);
    let rh = ((h as f64 * s).round() as usize).max(target_h);
    let rw = ((w as f64 * s).round() as usize).max(target_w);
    let (sy, sx) = (h as f64 / rh as f64, w as f64 / rw as f64);
    let (oy, ox) = ((rh - target_h) / 2, (rw - target_w) / 2);

    let sample = |pos: f64, n: usize| -> (usize, usize, f64) {
        let p = pos.clamp(0.0, (n - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, p - i0 as f64)
    };
    ImageBuffer::from_fn(target_h, target_w, c, |i, j, ch| {
        let (y0, y1, fy) = sample((i + oy) as f64 * sy + 0.5 * sy - 0.5, h);
        let (x0, x1, fx) = sample((j + ox) as f64 * sx + 0.5 * sx - 0.5, w);
        let top = img.get(y0, x0, ch) as f64 * (1.0 - fx) + img.get(y0, x1, ch) as f64 * fx;
        let bot = img.get(y1, x0, ch) as f64 * (1.0 - fx) + img.get(y1, x1, ch) as f64 * fx;
        (top * (1.0 - fy) + bot * fy) as f32
    })
}

/// Resize both views of a stereo pair with identical crop offsets.
pub fn resize_center_crop_pair(
    left: &ImageBuffer,
    right: &ImageBuffer,
    target_h: usize,
    target_w: usize,
) -> Result<(ImageBuffer, ImageBuffer)> {
    left.same_shape(right)?;
    Ok((
        resize_center_crop(left, target_h, target_w)?,
        resize_center_crop(right, target_h, target_w)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    SingleBaseline,
    MultiBaseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub name: String,
    pub size: u64,
    pub kind: DatasetKind,
    #[serde(default)]
    pub tuple_count: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixSpec {
    pub datasets: Vec<DatasetEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixWeight {
    pub name: String,
    pub effective: u64,
}

/// The largest single-baseline dataset keeps its size, every other
/// single-baseline dataset is resampled to 10% of it, and multi-baseline
/// datasets weigh ten times their tuple count.
pub fn mix_weights(spec: &MixSpec) -> Result<Vec<MixWeight>> {
    if spec.datasets.is_empty() {
        return Err(Error::EmptySpec);
    }
    for d in &spec.datasets {
        if d.size == 0 {
            return Err(Error::BadParams(format!("dataset {:?} has size 0", d.name)));
        }
        if d.kind == DatasetKind::MultiBaseline && d.tuple_count.is_none_or(|t| t == 0) {
            return Err(Error::BadParams(format!(
                "multi-baseline dataset {:?} needs a positive tuple_count",
                d.name
            )));
        }
    }
    let largest = spec
        .datasets
        .iter()
        .filter(|d| d.kind == DatasetKind::SingleBaseline)
        .map(|d| d.size)
        .max();
    let tenth = largest.map(|l| (l as f64 * 0.1).round() as u64);
    Ok(spec
        .datasets
        .iter()
        .map(|d| MixWeight {
            name: d.name.clone(),
            effective: match d.kind {
                DatasetKind::MultiBaseline => 10 * d.tuple_count.unwrap_or(0),
                DatasetKind::SingleBaseline if Some(d.size) == largest => d.size,
                DatasetKind::SingleBaseline => tenth.unwrap_or(d.size),
            },
        })
        .collect())
}

/// Every unordered pair `(i, j)`, `i < j`, of views in a tuple.
pub fn tuple_pairs(offsets: &[f64]) -> Result<Vec<(usize, usize)>> {
    if offsets.len() < 2 {
        return Err(Error::TooFewViews(format!("got {} view(s)", offsets.len())));
    }
    if offsets.iter().any(|o| !o.is_finite()) || offsets.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::TooFewViews("offsets must be finite and strictly increasing".into()));
    }
    let n = offsets.len();
    Ok((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::forward_warp;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Mutex;

    fn texture(h: usize, w: usize, seed: u64) -> ImageBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, 1, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    fn base_disparity(h: usize, w: usize) -> DisparityMap {
        DisparityMap::from_fn(h, w, |i, j| 10.0 + 20.0 * (i as f32 / h as f32) + 20.0 * (j as f32 / w as f32))
    }

    fn warp_generator(base: DisparityMap) -> impl Fn(&ImageBuffer, f64) -> Result<ImageBuffer> + Sync {
        move |src: &ImageBuffer, s: f64| {
            forward_warp(src, &base.scaled(s as f32), WarpDirection::LeftToRight).map(|(img, _)| img)
        }
    }

    fn params() -> SgbmParams {
        SgbmParams {
            num_disparities: 64,
            ..SgbmParams::default()
        }
    }

    #[test]
    fn rmse_examples() {
        let d = DisparityMap::from_fn(4, 5, |i, j| if (i + j) % 3 == 0 { f32::NAN } else { (i * j) as f32 });
        let (r, f) = disparity_rmse(&d, &d).unwrap();
        assert_eq!(r, 0.0);
        assert!((f - d.valid_fraction()).abs() < 1e-12);
        let plus = DisparityMap::from_fn(4, 5, |i, j| d.get(i, j) + 1.0);
        assert_eq!(disparity_rmse(&d, &plus).unwrap().0, 1.0);
        let a = DisparityMap::from_fn(2, 2, |_, j| if j == 0 { 1.0 } else { f32::NAN });
        let b = DisparityMap::from_fn(2, 2, |_, j| if j == 1 { 1.0 } else { f32::NAN });
        assert!(matches!(disparity_rmse(&a, &b), Err(Error::NoJointValid)));
        assert!(matches!(
            disparity_rmse(&a, &DisparityMap::filled(3, 2, 0.0)),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn symmetric_score_examples() {
        assert_eq!(symmetric_score(1.0, 1.0), 0.0);
        assert!((symmetric_score(0.8, 0.6) - 0.3).abs() < 1e-15);
        assert_eq!(symmetric_score(0.2, -0.7), symmetric_score(-0.7, 0.2));
    }

    #[test]
    fn recovers_hidden_scale_and_never_sees_right_view() {
        let (h, w) = (48, 96);
        let left = texture(h, w, 21);
        let base = base_disparity(h, w);
        let gen = warp_generator(base);
        let truth = 0.4;
        let right = gen(&left, truth).unwrap();

        let seen = Mutex::new(Vec::new());
        let spy = |src: &ImageBuffer, s: f64| {
            seen.lock().unwrap().push(src.data() == left.data() && src.data() != right.data());
            gen(src, s)
        };
        let cfg = SearchConfig::default();
        let res = calibrate_scale(&left, &right, &spy, &params(), &cfg).unwrap();
        assert!((res.best_scale - truth).abs() <= res.final_step, "{res:?}");
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.len(), cfg.levels * cfg.samples_per_level);
        assert!(seen.iter().all(|&ok| ok));
        assert!(res.trace.iter().all(|e| e.scale >= cfg.lo && e.scale <= cfg.hi));
        let min = res
            .trace
            .iter()
            .filter_map(|e| e.eligible(cfg.min_joint_valid))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(res.best_rmse, min);
    }

    #[test]
    fn constant_generator_picks_smallest_scale() {
        let left = texture(32, 64, 3);
        let right = texture(32, 64, 4);
        let fixed = right.clone();
        let gen = move |_: &ImageBuffer, _: f64| Ok(fixed.clone());
        let cfg = SearchConfig {
            levels: 2,
            samples_per_level: 5,
            ..SearchConfig::default()
        };
        let res = calibrate_scale(&left, &right, &gen, &params(), &cfg).unwrap();
        assert_eq!(res.best_scale, cfg.lo);
        assert_eq!(res.best_rmse, 0.0);
        assert!(res.trace.iter().all(|e| e.rmse == Some(0.0)));
    }

    #[test]
    fn more_samples_never_worsen_single_level_search() {
        let left = texture(32, 80, 8);
        let gen = warp_generator(base_disparity(32, 80));
        let right = gen(&left, 0.33).unwrap();
        let run = |n| {
            let cfg = SearchConfig {
                levels: 1,
                samples_per_level: n,
                ..SearchConfig::default()
            };
            calibrate_scale(&left, &right, &gen, &params(), &cfg).unwrap().best_rmse
        };
        let (coarse, fine) = (run(5), run(9));
        assert!(fine <= coarse, "{fine} > {coarse}");
    }

    #[test]
    fn all_invalid_candidates_error() {
        let left = texture(32, 64, 5);
        let right = texture(32, 64, 6);
        let gen = |src: &ImageBuffer, _: f64| Ok(src.clone());
        let cfg = SearchConfig {
            levels: 1,
            samples_per_level: 3,
            min_joint_valid: 1.0,
            ..SearchConfig::default()
        };
        assert!(matches!(
            calibrate_scale(&left, &right, &gen, &params(), &cfg),
            Err(Error::AllCandidatesInvalid)
        ));
    }

    #[test]
    fn evaluate_identity_and_constant_offset() {
        let left = texture(32, 64, 9);
        let right = ImageBuffer::from_fn(32, 64, 1, |i, j, _| left.get(i, j, 0) * 0.5).unwrap();
        let rec = evaluate_pair(&left, &right, &right, &params()).unwrap();
        assert_eq!(rec.psnr, None);
        assert!(rec.psnr_infinite);
        assert_eq!(rec.ssim, 1.0);

        let brighter =
            ImageBuffer::new(32, 64, 1, right.data().iter().map(|v| v + 0.1).collect()).unwrap();
        let rec = evaluate_pair(&left, &right, &brighter, &params()).unwrap();
        assert!((rec.psnr.unwrap() - 20.0).abs() < 1e-4, "{:?}", rec.psnr);
        assert!(!rec.psnr_infinite);

        assert_eq!(rec.convention, MATCHING_CONVENTION);

        let small = texture(16, 64, 1);
        assert!(matches!(
            evaluate_pair(&left, &right, &small, &params()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn consistent_synthesis_scores_better_than_noise() {
        let left = texture(40, 96, 10);
        let gen = warp_generator(DisparityMap::filled(40, 96, 8.0));
        let right = gen(&left, 1.0).unwrap();
        let good = evaluate_pair(&left, &right, &right, &params()).unwrap();
        let bad = evaluate_pair(&left, &right, &texture(40, 96, 11), &params()).unwrap();
        assert!(good.surrogate_consistency < bad.surrogate_consistency);
        assert!(good.surrogate_consistency < 0.2, "{}", good.surrogate_consistency);
    }

    #[test]
    fn resize_examples() {
        let img = texture(20, 30, 12);
        let same = resize_center_crop(&img, 20, 30).unwrap();
        for (a, b) in same.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
        let big = ImageBuffer::zeros(768, 1024, 3);
        let out = resize_center_crop(&big, 512, 512).unwrap();
        assert_eq!((out.height(), out.width()), (512, 512));
        assert!(matches!(resize_center_crop(&img, 0, 4), Err(Error::BadTarget(_))));
        assert!(matches!(resize_center_crop(&img, MAX_TARGET + 1, 4), Err(Error::BadTarget(_))));

        // column index survives a pure crop: 7 -> 4 drops one column on the left
        let ramp = ImageBuffer::from_fn(4, 7, 1, |_, j, _| j as f32 / 10.0).unwrap();
        let cropped = resize_center_crop(&ramp, 4, 4).unwrap();
        assert!((cropped.get(0, 0, 0) - 0.1).abs() < 1e-6);
    }

    #[test]
    fn resized_pair_keeps_zero_vertical_disparity() {
        let (h, w) = (60, 90);
        let left = texture(h, w, 13);
        let right = warp_generator(DisparityMap::filled(h, w, 6.0))(&left, 1.0).unwrap();
        let (l, r) = resize_center_crop_pair(&left, &right, 40, 40).unwrap();
        // best horizontal match cost for each vertical offset
        let cost = |dy: isize| -> f64 {
            let mut acc = 0.0;
            for i in 4..36isize {
                for j in 8..36usize {
                    acc += (0..8)
                        .map(|d| {
                            let v = l.get(i as usize, j, 0) - r.get((i + dy) as usize, j - d, 0);
                            (v * v) as f64
                        })
                        .fold(f64::INFINITY, f64::min);
                }
            }
            acc
        };
        let at0 = cost(0);
        assert!(at0 < cost(1) && at0 < cost(-1));
    }

    #[test]
    fn mix_weight_examples() {
        let spec = MixSpec {
            datasets: vec![
                DatasetEntry {
                    name: "big".into(),
                    size: 306_000,
                    kind: DatasetKind::SingleBaseline,
                    tuple_count: None,
                },
                DatasetEntry {
                    name: "small".into(),
                    size: 1000,
                    kind: DatasetKind::SingleBaseline,
                    tuple_count: None,
                },
                DatasetEntry {
                    name: "multi".into(),
                    size: 200_000,
                    kind: DatasetKind::MultiBaseline,
                    tuple_count: Some(27_000),
                },
            ],
        };
        let w = mix_weights(&spec).unwrap();
        assert_eq!(w.iter().map(|m| m.effective).collect::<Vec<_>>(), vec![306_000, 30_600, 270_000]);
        let alone = MixSpec {
            datasets: vec![spec.datasets[1].clone()],
        };
        assert_eq!(mix_weights(&alone).unwrap()[0].effective, 1000);
        assert!(matches!(mix_weights(&MixSpec { datasets: vec![] }), Err(Error::EmptySpec)));
    }

    #[test]
    fn tuple_pair_counts() {
        assert_eq!(tuple_pairs(&[0.0, 5.0, 10.0, 15.0, 20.0]).unwrap().len(), 10);
        assert_eq!(tuple_pairs(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap().len(), 21);
        assert_eq!(tuple_pairs(&[0.0, 3.0]).unwrap(), vec![(0, 1)]);
        assert!(matches!(tuple_pairs(&[1.0]), Err(Error::TooFewViews(_))));
        assert!(matches!(tuple_pairs(&[1.0, 1.0]), Err(Error::TooFewViews(_))));
    }
}
