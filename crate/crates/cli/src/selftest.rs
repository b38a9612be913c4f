//! Built-in invariant suite. Output depends only on the seed: no timings, no
//! thread-count dependent values.

use nalgebra::{Rotation3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use stereospace_kit::diffusion::*;
use stereospace_kit::geometry::*;
use stereospace_kit::harness::*;
use stereospace_kit::imaging::*;
use stereospace_kit::losses::*;
use stereospace_kit::matching::{sgbm, SgbmParams};

use crate::args::Format;
use crate::output::{stdout_records, CliError, CliResult};

type Check = fn(&mut ChaCha8Rng) -> Result<String, String>;

const CHECKS: &[(&str, Check)] = &[
    ("plucker_unit_incidence", plucker_unit_incidence),
    ("plucker_gauge", plucker_gauge),
    ("canonical_rig", canonical_rig),
    ("warp_identity", warp_identity),
    ("warp_adjoint", warp_adjoint),
    ("lr_mask_monotone", lr_mask_monotone),
    ("ssim_identity", ssim_identity),
    ("pixel_loss_gradient", pixel_loss_gradient),
    ("warp_loss_gradient", warp_loss_gradient),
    ("velocity_loss_gradient", velocity_loss_gradient),
    ("warp_loss_oracle", warp_loss_oracle),
    ("zero_terminal_snr", zero_terminal_snr),
    ("velocity_round_trip", velocity_round_trip),
    ("ddim_oracle", ddim_oracle),
    ("guidance_special_cases", guidance_special_cases),
    ("sgbm_integer_shift", sgbm_integer_shift),
    ("sgbm_subpixel_shift", sgbm_subpixel_shift),
    ("calibration_recovery", calibration_recovery),
    ("protocol_arithmetic", protocol_arithmetic),
    ("file_round_trip", file_round_trip),
    ("resize_crop", resize_crop),
];

#[derive(Serialize)]
struct Row<'a> {
    check: &'a str,
    passed: bool,
    detail: String,
}

#[derive(Serialize)]
struct Totals {
    passed: usize,
    failed: usize,
}

pub fn run(seed: u64, format: Format) -> CliResult<()> {
    let mut out = stdout_records(format);
    let mut failed = 0;
    for (k, (name, check)) in CHECKS.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let (passed, detail) = match check(&mut rng) {
            Ok(d) => (true, d),
            Err(d) => (false, d),
        };
        failed += usize::from(!passed);
        out.write(&Row {
            check: name,
            passed,
            detail,
        })?;
    }
    let totals = Totals {
        passed: CHECKS.len() - failed,
        failed,
    };
    match format {
        Format::Json => out.write(&totals)?,
        Format::Csv => out.write(&Row {
            check: "total",
            passed: failed == 0,
            detail: format!("passed={} failed={}", totals.passed, totals.failed),
        })?,
    }
    out.finish()?;
    if failed > 0 {
        return Err(CliError::SelftestFailed(failed));
    }
    Ok(())
}

fn ensure(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<T: std::fmt::Display>(err: T) -> String {
    err.to_string()
}

fn random_pose(rng: &mut ChaCha8Rng) -> RigidPose {
    let axis = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
    let t = Vector3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
    RigidPose::new(*Rotation3::from_scaled_axis(axis).matrix(), t).expect("rotation is orthonormal")
}

fn random_intrinsics(rng: &mut ChaCha8Rng) -> CameraIntrinsics {
    let (w, h) = (rng.gen_range(8..128), rng.gen_range(8..128));
    CameraIntrinsics::new(
        rng.gen_range(20.0..400.0),
        rng.gen_range(20.0..400.0),
        w as f64 * rng.gen_range(0.3..0.7),
        h as f64 * rng.gen_range(0.3..0.7),
        w,
        h,
    )
    .expect("positive focal lengths")
}

pub fn texture(h: usize, w: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
    ImageBuffer::from_fn(h, w, 1, |_, _, _| rng.gen_range(0.0..1.0)).expect("values in range")
}

fn plucker_unit_incidence(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (mut unit, mut inc) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let intr = random_intrinsics(rng);
        let pose = random_pose(rng);
        let ray = pixel_ray(&intr, &pose, rng.gen_range(0..intr.height), rng.gen_range(0..intr.width)).map_err(e)?;
        unit = unit.max((ray.direction.norm() - 1.0).abs());
        inc = inc.max(ray.direction.dot(&ray.moment).abs());
    }
    ensure(unit < 1e-9 && inc < 1e-9, format!("max |1-|d||={unit:.3e} max |d.m|={inc:.3e}"))
}

fn plucker_gauge(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c = Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let d = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if d.norm() < 1e-3 {
            continue;
        }
        let t = rng.gen_range(-20.0..20.0);
        let a = PluckerRay::through(c, d);
        let b = PluckerRay::through(c + t * d, d);
        worst = worst.max((a.moment - b.moment).norm());
    }
    ensure(worst < 1e-9, format!("max moment drift={worst:.3e}"))
}

fn canonical_rig(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let intr = random_intrinsics(rng);
        let pose = random_pose(rng);
        let sep = rng.gen_range(0.05..5.0);
        let baseline = rng.gen_range(0.05..1.0);
        let right_c = pose.center() + pose.rotation * Vector3::new(sep, 0.0, 0.0);
        let left = Camera::new(intr, pose).map_err(e)?;
        let right = Camera::new(intr, RigidPose::new(pose.rotation, right_c).map_err(e)?).map_err(e)?;
        let rig = canonicalize_rig(&left, &right, baseline).map_err(e)?;
        let again = canonicalize_rig(&rig.left, &rig.right, baseline).map_err(e)?;
        if again != rig {
            return Err("canonicalization is not idempotent".into());
        }
        let l = (rig.left.pose.center() - Vector3::new(-baseline / 2.0, 0.0, 0.0)).norm();
        let r = (rig.right.pose.center() - Vector3::new(baseline / 2.0, 0.0, 0.0)).norm();
        worst = worst.max(l).max(r);
    }
    ensure(worst < 1e-12, format!("max center error={worst:.3e}"))
}

fn warp_identity(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let img = texture(12, 20, rng);
    let (out, m) = backward_warp(&img, &DisparityMap::filled(12, 20, 0.0), WarpDirection::LeftToRight).map_err(e)?;
    ensure(out == img && m.count() == 12 * 20, format!("valid={}", m.count()))
}

fn warp_adjoint(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (h, w, c) = (10, 24, 3);
    let d = DisparityMap::from_fn(h, w, |_, _| rng.gen_range(-2.0..9.0));
    let plan = WarpPlan::new(&d, WarpDirection::LeftToRight);
    let x: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..h * w * c).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ax = plan.apply(&x, c);
    let aty = plan.adjoint(&y, c);
    let lhs: f64 = ax.iter().zip(&y).map(|(a, b)| a * b).sum();
    let rhs: f64 = x.iter().zip(&aty).map(|(a, b)| a * b).sum();
    let gap = (lhs - rhs).abs();
    ensure(gap < 1e-10, format!("|<Ax,y>-<x,A'y>|={gap:.3e}"))
}

fn lr_mask_monotone(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (h, w) = (16, 32);
    let dl = DisparityMap::from_fn(h, w, |_, _| rng.gen_range(0.0..6.0));
    let dr = DisparityMap::from_fn(h, w, |_, _| rng.gen_range(0.0..6.0));
    let mut prev: Option<ValidityMask> = None;
    let mut counts = Vec::new();
    for tau in [0.0, 0.5, 1.0, 2.0, 4.0] {
        let m = lr_consistency_mask(&dl, &dr, tau).map_err(e)?;
        if let Some(p) = &prev {
            if !p.is_subset_of(&m) {
                return Err(format!("mask shrank at tau={tau}"));
            }
        }
        counts.push(m.count());
        prev = Some(m);
    }
    Ok(format!("counts={counts:?}"))
}

fn ssim_identity(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let a = ImageBuffer::from_fn(24, 24, 3, |_, _, _| rng.gen_range(0.0..1.0)).map_err(e)?;
    let s = ssim(&a, &a).map_err(e)?.value;
    ensure(s == 1.0, format!("ssim={s}"))
}

/// Central difference on an `f32` image, dividing by the step actually taken.
fn fd_image(
    img: &ImageBuffer,
    k: usize,
    h: f32,
    f: &dyn Fn(&ImageBuffer) -> Result<f64, String>,
) -> Result<f64, String> {
    let c = img.channels();
    let (p, ch) = (k / c, k % c);
    let (i, j) = (p / img.width(), p % img.width());
    let x = img.get(i, j, ch);
    let mut plus = img.clone();
    plus.set(i, j, ch, x + h);
    let mut minus = img.clone();
    minus.set(i, j, ch, x - h);
    let step = plus.get(i, j, ch) as f64 - minus.get(i, j, ch) as f64;
    Ok((f(&plus)? - f(&minus)?) / step)
}

fn rel_err(fd: f64, an: f64) -> f64 {
    let scale = fd.abs().max(an.abs());
    if scale < 1e-12 {
        0.0
    } else {
        (fd - an).abs() / scale
    }
}

/// Image pair with every residual well away from zero so `|r|` is smooth
/// under the probe step.
pub fn separated_pair(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> (ImageBuffer, ImageBuffer) {
    let a = ImageBuffer::from_fn(h, w, c, |_, _, _| rng.gen_range(0.1..0.9)).expect("in range");
    let b = ImageBuffer::from_fn(h, w, c, |i, j, ch| {
        let off = rng.gen_range(0.02..0.08) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        (a.get(i, j, ch) + off).clamp(0.0, 1.0)
    })
    .expect("in range");
    (a, b)
}

pub fn pixel_loss_worst(rng: &mut ChaCha8Rng, probes: usize) -> Result<f64, String> {
    let (pred, target) = separated_pair(32, 32, 3, rng);
    let w = LossWeights::default();
    let grad = pixel_loss(&pred, &target, &w).map_err(e)?.gradient.ok_or("no gradient")?;
    let f = |img: &ImageBuffer| pixel_loss(img, &target, &w).map(|l| l.value).map_err(e);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let k = rng.gen_range(0..pred.len());
        worst = worst.max(rel_err(fd_image(&pred, k, 1e-4, &f)?, grad[k]));
    }
    Ok(worst)
}

fn pixel_loss_gradient(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let worst = pixel_loss_worst(rng, 40)?;
    ensure(worst < 1e-4, format!("max rel err={worst:.3e}"))
}

pub fn warp_loss_worst(rng: &mut ChaCha8Rng, probes: usize) -> Result<f64, String> {
    let (h, w) = (32, 32);
    let (pred, _) = separated_pair(h, w, 3, rng);
    let source = ImageBuffer::from_fn(h, w, 3, |_, _, _| rng.gen_range(0.0..1.0)).map_err(e)?;
    let disp = DisparityMap::from_fn(h, w, |_, _| rng.gen_range(0.0..6.0));
    let mask = ValidityMask::filled(h, w, true);
    let dir = WarpDirection::LeftToRight;
    let grad = warp_loss(&pred, &source, &disp, &mask, dir).map_err(e)?.gradient.ok_or("no gradient")?;
    let f = |img: &ImageBuffer| warp_loss(img, &source, &disp, &mask, dir).map(|l| l.value).map_err(e);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let k = rng.gen_range(0..pred.len());
        worst = worst.max(rel_err(fd_image(&pred, k, 1e-4, &f)?, grad[k]));
    }
    Ok(worst)
}

fn warp_loss_gradient(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let worst = warp_loss_worst(rng, 40)?;
    ensure(worst < 1e-4, format!("max rel err={worst:.3e}"))
}

pub fn velocity_loss_worst(rng: &mut ChaCha8Rng, probes: usize) -> Result<f64, String> {
    let pred = Latent::from_fn(4, 32, 32, || rng.gen_range(-1.0..1.0));
    let truth = Latent::from_fn(4, 32, 32, || rng.gen_range(-1.0..1.0));
    let weight = Some(0.7);
    let grad = velocity_loss(&pred, &truth, weight).map_err(e)?.gradient.ok_or("no gradient")?;
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let k = rng.gen_range(0..pred.len());
        let bump = |delta: f64| -> Result<f64, String> {
            let mut data = pred.data().to_vec();
            data[k] += delta;
            let [c, hh, ww] = pred.shape();
            let p = Latent::new(c, hh, ww, data).map_err(e)?;
            velocity_loss(&p, &truth, weight).map(|l| l.value).map_err(e)
        };
        let fd = (bump(h)? - bump(-h)?) / (2.0 * h);
        worst = worst.max(rel_err(fd, grad[k]));
    }
    Ok(worst)
}

fn velocity_loss_gradient(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let worst = velocity_loss_worst(rng, 40)?;
    ensure(worst < 1e-4, format!("max rel err={worst:.3e}"))
}

/// Left texture, per-row integer disparity, and the right view obtained by
/// splatting the left view along it.
pub fn splatted_pair(h: usize, w: usize, rng: &mut ChaCha8Rng) -> (ImageBuffer, DisparityMap, ImageBuffer) {
    let left = ImageBuffer::from_fn(h, w, 3, |_, _, _| rng.gen_range(0.0..1.0)).expect("in range");
    let rows: Vec<f32> = (0..h).map(|_| rng.gen_range(1..9) as f32).collect();
    let disp = DisparityMap::from_fn(h, w, |i, _| rows[i]);
    let (right, _) = forward_warp(&left, &disp, WarpDirection::LeftToRight).expect("shapes agree");
    (left, disp, right)
}

fn warp_loss_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (left, disp, right) = splatted_pair(24, 40, rng);
    let mask = ValidityMask::filled(24, 40, true);
    let lw = warp_loss(&right, &left, &disp, &mask, WarpDirection::LeftToRight).map_err(e)?;
    let w = LossWeights::default();
    let (pred, target) = separated_pair(24, 40, 3, rng);
    let lp = pixel_loss(&pred, &target, &w).map_err(e)?;
    let lv = LossValue::scalar(rng.gen_range(0.0..1.0));
    let total = total_loss(Some(&lv), &lp, Some(&lw), &w).map_err(e)?;
    let by_hand = lv.value + w.lambda_pix * lp.value + w.lambda_warp * lw.value;
    let gap = (total.value - by_hand).abs();
    ensure(lw.value < 1e-6 && gap < 1e-9, format!("warp loss={:.3e} composition gap={gap:.3e}", lw.value))
}

fn zero_terminal_snr(_: &mut ChaCha8Rng) -> Result<String, String> {
    let s = default_schedule(1000, true).map_err(e)?;
    let last = s.alpha_bar(999).map_err(e)?.sqrt();
    ensure(last == 0.0, format!("sqrt(alpha_bar[999])={last}"))
}

fn velocity_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let s = default_schedule(1000, true).map_err(e)?;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = rng.gen_range(0..1000);
        let ab = s.alpha_bar(t).map_err(e)?;
        let x0 = Latent::from_fn(4, 8, 8, || rng.gen_range(-1.0..1.0));
        let eps = Latent::from_fn(4, 8, 8, || rng.gen_range(-3.0..3.0));
        let z = add_noise(&x0, &eps, t, &s, 0.0, &[0.0; 4]).map_err(e)?;
        let v = velocity_target(&x0, &eps, ab).map_err(e)?;
        worst = worst.max(x0_from_v(&z, &v, t, &s).map_err(e)?.max_abs_diff(&x0).map_err(e)?);
    }
    ensure(worst < 1e-6, format!("max x0 error={worst:.3e}"))
}

fn ddim_oracle(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let s = default_schedule(1000, true).map_err(e)?;
    let x0 = Latent::from_fn(4, 16, 16, || rng.gen_range(-1.0..1.0));
    let z = Latent::from_fn(4, 16, 16, || rng.gen_range(-2.0..2.0));
    let sampler = DdimSampler::new(s.clone(), 50).map_err(e)?;
    let out = sampler.sample(&oracle_denoiser(x0.clone(), &s), &(), &z).map_err(e)?;
    let err = out.max_abs_diff(&x0).map_err(e)?;
    ensure(err < 1e-4, format!("max error={err:.3e}"))
}

fn guidance_special_cases(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let u = Latent::from_fn(4, 8, 8, || rng.gen_range(-3.0..3.0));
    let c = Latent::from_fn(4, 8, 8, || rng.gen_range(-3.0..3.0));
    let at = |scale| cfg_combine(&u, &c, &GuidanceConfig { scale, ..GuidanceConfig::default() });
    let one = at(1.0).map_err(e)?;
    let zero = at(0.0).map_err(e)?;
    ensure(one == c && zero == u, "k=1 gives cond, k=0 gives uncond".into())
}

/// Left texture and a right view with `right(x) = left(x + shift)`.
pub fn shifted_pair(h: usize, w: usize, shift: f32, rng: &mut ChaCha8Rng) -> (ImageBuffer, ImageBuffer) {
    let wide = texture(h, w + 32, rng);
    let (right_wide, _) =
        backward_warp(&wide, &DisparityMap::filled(h, w + 32, shift), WarpDirection::RightToLeft).expect("shapes agree");
    let crop = |img: &ImageBuffer| ImageBuffer::from_fn(h, w, 1, |i, j, c| img.get(i, j, c)).expect("in range");
    (crop(&wide), crop(&right_wide))
}

/// Errors of the valid left-referenced disparities against `shift`.
pub fn sgbm_errors(left: &ImageBuffer, right: &ImageBuffer, shift: f32) -> Result<Vec<f32>, String> {
    let p = SgbmParams {
        num_disparities: 32,
        ..SgbmParams::default()
    };
    let (dl, _) = sgbm(left, right, &p).map_err(e)?;
    let mut errs: Vec<f32> = dl.data().iter().filter(|d| d.is_finite()).map(|d| (d - shift).abs()).collect();
    errs.sort_by(|a, b| a.total_cmp(b));
    Ok(errs)
}

fn sgbm_integer_shift(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (l, r) = shifted_pair(64, 64, 8.0, rng);
    let errs = sgbm_errors(&l, &r, 8.0)?;
    let within = errs.iter().filter(|&&x| x <= 0.5).count() as f64 / errs.len().max(1) as f64;
    ensure(within >= 0.99, format!("within 0.5px={within:.4} of {} valid", errs.len()))
}

fn sgbm_subpixel_shift(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (l, r) = shifted_pair(64, 64, 8.25, rng);
    let errs = sgbm_errors(&l, &r, 8.25)?;
    let median = errs.get(errs.len() / 2).copied().unwrap_or(f32::INFINITY);
    ensure(median < 0.25, format!("median error={median:.4}"))
}

/// Smoothly varying disparity between 10 and 50 pixels.
pub fn base_disparity(h: usize, w: usize) -> DisparityMap {
    DisparityMap::from_fn(h, w, |i, j| 10.0 + 20.0 * (i as f32 / h as f32) + 20.0 * (j as f32 / w as f32))
}

fn calibration_recovery(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let (h, w) = (32, 96);
    let left = texture(h, w, rng);
    let base = base_disparity(h, w);
    let gen = |src: &ImageBuffer, s: f64| {
        forward_warp(src, &base.scaled(s as f32), WarpDirection::LeftToRight).map(|(img, _)| img)
    };
    let truth = 0.4;
    let right = gen(&left, truth).map_err(e)?;
    let leaked = std::sync::atomic::AtomicBool::new(false);
    let spy = |src: &ImageBuffer, s: f64| {
        if src.data() != left.data() {
            leaked.store(true, std::sync::atomic::Ordering::Relaxed);
        }
        gen(src, s)
    };
    let p = SgbmParams {
        num_disparities: 64,
        ..SgbmParams::default()
    };
    let cfg = SearchConfig {
        samples_per_level: 8,
        ..SearchConfig::default()
    };
    let res = calibrate_scale(&left, &right, &spy, &p, &cfg).map_err(e)?;
    let err = (res.best_scale - truth).abs();
    ensure(
        err <= res.final_step && !leaked.into_inner(),
        format!("best={:.5} step={:.5}", res.best_scale, res.final_step),
    )
}

fn protocol_arithmetic(_: &mut ChaCha8Rng) -> Result<String, String> {
    let entry = |name: &str, size, kind, tuples| DatasetEntry {
        name: name.into(),
        size,
        kind,
        tuple_count: tuples,
    };
    let spec = MixSpec {
        datasets: vec![
            entry("large", 306_000, DatasetKind::SingleBaseline, None),
            entry("small", 1000, DatasetKind::SingleBaseline, None),
            entry("tuples", 100_000, DatasetKind::MultiBaseline, Some(27_000)),
        ],
    };
    let w: Vec<u64> = mix_weights(&spec).map_err(e)?.iter().map(|m| m.effective).collect();
    let five = tuple_pairs(&[0.0, 1.0, 2.0, 3.0, 4.0]).map_err(e)?.len();
    let seven = tuple_pairs(&[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).map_err(e)?.len();
    ensure(
        w == [306_000, 30_600, 270_000] && five == 10 && seven == 21,
        format!("weights={w:?} pairs={five},{seven}"),
    )
}

fn file_round_trip(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let d = DisparityMap::from_fn(7, 9, |_, _| if rng.gen_bool(0.2) { f32::NAN } else { rng.gen_range(-40.0..40.0) });
    let back = decode_disparity(&encode_pfm(&d)).map_err(e)?;
    let same = d.data().iter().zip(back.data()).all(|(a, b)| a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
    let img = ImageBuffer::from_fn(5, 6, 3, |_, _, _| rng.gen_range(0..=255) as f32 / 255.0).map_err(e)?;
    let img_back = decode_image(&encode_ppm(&img)).map_err(e)?;
    ensure(same && img_back == img, "pfm and ppm round-trip".into())
}

fn resize_crop(rng: &mut ChaCha8Rng) -> Result<String, String> {
    let img = texture(20, 30, rng);
    let same = resize_center_crop(&img, 20, 30).map_err(e)?;
    let diff = same.data().iter().zip(img.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    let big = resize_center_crop(&ImageBuffer::zeros(768, 1024, 1), 512, 512).map_err(e)?;
    ensure(
        diff < 1e-6 && (big.height(), big.width()) == (512, 512),
        format!("identity diff={diff:.3e}"),
    )
}
