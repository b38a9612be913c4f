//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

use std::process::{Command, ExitCode};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stereospace_cli::selftest::{
    base_disparity, pixel_loss_worst, separated_pair, sgbm_errors, shifted_pair, splatted_pair, texture,
    velocity_loss_worst, warp_loss_worst,
};
use stereospace_kit::diffusion::*;
use stereospace_kit::geometry::*;
use stereospace_kit::harness::*;
use stereospace_kit::imaging::*;
use stereospace_kit::losses::*;
use stereospace_kit::matching::SgbmParams;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<T: std::fmt::Display>(err: T) -> String {
    err.to_string()
}

fn within(limit: Duration, started: Instant, outcome: Outcome) -> Outcome {
    let took = started.elapsed();
    match outcome {
        Ok(d) if took < limit => Ok(format!("{d}; {:.2}s", took.as_secs_f64())),
        Ok(d) => Err(format!("{d}; took {:.2}s, limit {}s", took.as_secs_f64(), limit.as_secs())),
        Err(d) => Err(d),
    }
}

fn plucker_suite() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut unit, mut inc, mut gauge) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(8..256), rng.gen_range(8..256));
        let intr = CameraIntrinsics::new(
            rng.gen_range(20.0..800.0),
            rng.gen_range(20.0..800.0),
            w as f64 * rng.gen_range(0.2..0.8),
            h as f64 * rng.gen_range(0.2..0.8),
            w,
            h,
        )
        .map_err(e)?;
        let axis = Vector3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let center = Vector3::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let pose = RigidPose::new(*nalgebra::Rotation3::from_scaled_axis(axis).matrix(), center).map_err(e)?;
        let ray = pixel_ray(&intr, &pose, rng.gen_range(0..h), rng.gen_range(0..w)).map_err(e)?;
        unit = unit.max((ray.direction.norm() - 1.0).abs());
        inc = inc.max(ray.direction.dot(&ray.moment).abs());
        let slid = PluckerRay::through(center + rng.gen_range(-25.0..25.0) * ray.direction, ray.direction);
        gauge = gauge.max((slid.moment - ray.moment).norm());
    }
    within(
        Duration::from_secs(5),
        started,
        check(
            unit < 1e-9 && inc < 1e-9 && gauge < 1e-9,
            format!("max |1-|d||={unit:.2e}, max |d.m|={inc:.2e}, gauge drift={gauge:.2e}"),
        ),
    )
}

fn gradient_suite() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pix = pixel_loss_worst(&mut rng, 100)?;
    let warp = warp_loss_worst(&mut rng, 100)?;
    let vel = velocity_loss_worst(&mut rng, 100)?;
    within(
        Duration::from_secs(30),
        started,
        check(
            pix < 1e-4 && warp < 1e-4 && vel < 1e-4,
            format!("max rel err pixel={pix:.2e} warp={warp:.2e} velocity={vel:.2e} over 100 coords each"),
        ),
    )
}

fn warp_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_warp = 0.0f64;
    let mut worst_gap = 0.0f64;
    let w = LossWeights {
        lambda_pix: 1.0,
        lambda_warp: 0.3,
        ..LossWeights::default()
    };
    for _ in 0..5 {
        let (left, disp, right) = splatted_pair(32, 48, &mut rng);
        let mask = ValidityMask::filled(32, 48, true);
        let lw = warp_loss(&right, &left, &disp, &mask, WarpDirection::LeftToRight).map_err(e)?;
        worst_warp = worst_warp.max(lw.value);

        let (pred, target) = separated_pair(32, 48, 3, &mut rng);
        let lp = pixel_loss(&pred, &target, &w).map_err(e)?;
        let lw2 = warp_loss(&pred, &left, &disp, &mask, WarpDirection::LeftToRight).map_err(e)?;
        let lv = LossValue::scalar(rng.gen_range(0.0..2.0));
        let total = total_loss(Some(&lv), &lp, Some(&lw2), &w).map_err(e)?;
        worst_gap = worst_gap.max((total.value - (lv.value + 1.0 * lp.value + 0.3 * lw2.value)).abs());
    }
    check(
        worst_warp < 1e-6 && worst_gap < 1e-9,
        format!("max warp loss on true target={worst_warp:.2e}, total composition gap={worst_gap:.2e}"),
    )
}

fn diffusion_algebra() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let s = default_schedule(1000, true).map_err(e)?;
    let terminal = s.alpha_bar(999).map_err(e)?.sqrt();

    let mut round_trip = 0.0f64;
    for t in (0..1000).step_by(37) {
        let ab = s.alpha_bar(t).map_err(e)?;
        let x0 = Latent::from_fn(4, 16, 16, || rng.gen_range(-1.0..1.0));
        let eps = Latent::from_fn(4, 16, 16, || rng.gen_range(-3.0..3.0));
        let z = add_noise(&x0, &eps, t, &s, 0.0, &[0.0; 4]).map_err(e)?;
        let v = velocity_target(&x0, &eps, ab).map_err(e)?;
        round_trip = round_trip.max(x0_from_v(&z, &v, t, &s).map_err(e)?.max_abs_diff(&x0).map_err(e)?);
    }

    let x0 = Latent::from_fn(4, 32, 32, || rng.gen_range(-1.0..1.0));
    let z = Latent::from_fn(4, 32, 32, || rng.gen_range(-3.0..3.0));
    let sampler = DdimSampler::new(s.clone(), 50).map_err(e)?;
    let ddim = sampler
        .sample(&oracle_denoiser(x0.clone(), &s), &(), &z)
        .map_err(e)?
        .max_abs_diff(&x0)
        .map_err(e)?;
    within(
        Duration::from_secs(10),
        started,
        check(
            terminal == 0.0 && round_trip < 1e-6 && ddim < 1e-4,
            format!("sqrt(alpha_bar[999])={terminal}, round-trip={round_trip:.2e}, 50-step ddim={ddim:.2e}"),
        ),
    )
}

fn sgbm_recovery() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(50 + seed);

        let started = Instant::now();
        let (l, r) = shifted_pair(64, 64, 8.0, &mut rng);
        let errs = sgbm_errors(&l, &r, 8.0)?;
        let frac = errs.iter().filter(|&&x| x <= 0.5).count() as f64 / errs.len().max(1) as f64;
        ok &= frac >= 0.99 && !errs.is_empty() && started.elapsed() < Duration::from_secs(10);

        let started = Instant::now();
        let (l, r) = shifted_pair(64, 64, 8.25, &mut rng);
        let errs = sgbm_errors(&l, &r, 8.25)?;
        let median = errs.get(errs.len() / 2).copied().unwrap_or(f32::INFINITY);
        ok &= median < 0.25 && started.elapsed() < Duration::from_secs(10);

        details.push(format!("seed {seed}: int {frac:.4} within 0.5px, subpx median {median:.3}"));
    }
    check(ok, details.join("; "))
}

fn calibration_recovery() -> Outcome {
    let started = Instant::now();
    let (h, w) = (48, 96);
    let params = SgbmParams {
        num_disparities: 64,
        ..SgbmParams::default()
    };
    let cfg = SearchConfig::default();
    let mut details = Vec::new();
    let mut ok = true;
    for (seed, truth) in [(61u64, 0.1), (62, 0.4), (63, 0.9)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let left = texture(h, w, &mut rng);
        let base = base_disparity(h, w);
        let gen = |src: &ImageBuffer, s: f64| {
            forward_warp(src, &base.scaled(s as f32), WarpDirection::LeftToRight).map(|(img, _)| img)
        };
        let right = gen(&left, truth).map_err(e)?;
        let leaked = AtomicBool::new(false);
        let spy = |src: &ImageBuffer, s: f64| {
            if src.data() != left.data() || src.data() == right.data() {
                leaked.store(true, Ordering::Relaxed);
            }
            gen(src, s)
        };
        let res = calibrate_scale(&left, &right, &spy, &params, &cfg).map_err(e)?;
        let hit = (res.best_scale - truth).abs() <= res.final_step;
        let clean = !leaked.into_inner();
        let bounded = res.trace.iter().all(|t| t.scale >= cfg.lo && t.scale <= cfg.hi);
        ok &= hit && clean && bounded;
        details.push(format!(
            "s*={truth}: best {:.4} (step {:.4}){}",
            res.best_scale,
            res.final_step,
            if clean { "" } else { " LEAK" }
        ));
    }
    within(Duration::from_secs(60), started, check(ok, details.join("; ")))
}

fn protocol_arithmetic() -> Outcome {
    let entry = |name: &str, size, kind, tuple_count| DatasetEntry {
        name: name.into(),
        size,
        kind,
        tuple_count,
    };
    let spec = MixSpec {
        datasets: vec![
            entry("largest", 306_000, DatasetKind::SingleBaseline, None),
            entry("small", 1000, DatasetKind::SingleBaseline, None),
            entry("medium", 50_000, DatasetKind::SingleBaseline, None),
            entry("multi", 150_000, DatasetKind::MultiBaseline, Some(27_000)),
        ],
    };
    let weights: Vec<u64> = mix_weights(&spec).map_err(e)?.iter().map(|m| m.effective).collect();
    let five = tuple_pairs(&[0.0, 5.0, 10.0, 15.0, 20.0]).map_err(e)?.len();
    let seven = tuple_pairs(&[0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]).map_err(e)?.len();
    check(
        weights == [306_000, 30_600, 30_600, 270_000] && five == 10 && seven == 21,
        format!("weights={weights:?}, pairs(5)={five}, pairs(7)={seven}"),
    )
}

fn selftest_output(threads: &str) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_stsp"))
        .args(["--seed", "7", "selftest"])
        .env("STSP_THREADS", threads)
        .output()
        .map_err(e)?;
    if !out.status.success() {
        return Err(format!(
            "selftest exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let a = selftest_output("1")?;
    let b = selftest_output("1")?;
    let c = selftest_output("8")?;
    check(
        a == b && a == c && !a.is_empty(),
        format!("{} bytes; run-to-run equal={}, 1 vs 8 threads equal={}", a.len(), a == b, a == c),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("plucker constraints and gauge invariance", plucker_suite),
        ("analytic loss gradients", gradient_suite),
        ("warp-loss oracle and total composition", warp_oracle),
        ("diffusion algebra", diffusion_algebra),
        ("sgbm shift recovery", sgbm_recovery),
        ("calibration recovery and leakage spy", calibration_recovery),
        ("protocol arithmetic", protocol_arithmetic),
        ("selftest determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("acceptance {} PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("acceptance {} FAIL {name}: {detail}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
