use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use serde_json::json;
use stereospace_kit::diffusion::{
    default_schedule, min_snr_weight, oracle_denoiser, DdimSampler, Latent,
};
use stereospace_kit::geometry::{canonicalize_rig, format_camera, parse_camera, pixel_ray, plucker_map, Camera};
use stereospace_kit::harness::{mix_weights, summarize, tuple_pairs, MixSpec};
use stereospace_kit::imaging::*;
use stereospace_kit::losses::{pixel_loss, total_loss, velocity_loss, warp_loss, LossWeights};
use stereospace_kit::matching::sgbm;
use stereospace_kit::Error;

use crate::args::*;
use crate::output::{file_records, print_json, stdout_records, CliError, CliResult};
use crate::scenes;

pub fn dispatch(g: &GlobalOpts, cmd: Command) -> CliResult<()> {
    let format = g.format.unwrap_or(Format::Json);
    match cmd {
        Command::Plucker(a) => plucker(a),
        Command::Canonicalize(a) => canonicalize(a),
        Command::Warp(a) => warp(a),
        Command::Mask(a) => mask(a),
        Command::Loss(a) => loss(a),
        Command::Schedule(a) => schedule(a, g.format.unwrap_or(Format::Csv)),
        Command::DdimRoundtrip(a) => ddim_roundtrip(a, g.seed),
        Command::Sgbm(a) => run_sgbm(a),
        Command::Calibrate(a) => calibrate(a, format),
        Command::Evaluate(a) => evaluate(a, format),
        Command::MixWeights => mix(format),
        Command::TuplePairs => pairs(format),
        Command::Selftest => crate::selftest::run(g.seed, format),
    }
}

fn read_camera(path: &Path) -> CliResult<(Camera, Option<f64>)> {
    Ok(parse_camera(&std::fs::read_to_string(path)?)?)
}

fn plucker(a: PluckerArgs) -> CliResult<()> {
    let (cam, _) = read_camera(&a.camera)?;
    if let Some((row, col)) = a.pixel {
        let ray = pixel_ray(&cam.intrinsics, &cam.pose, row, col)?;
        return print_json(&json!({
            "row": row,
            "col": col,
            "direction": ray.direction.as_slice(),
            "moment": ray.moment.as_slice(),
        }));
    }
    let map = plucker_map(&cam.intrinsics, &cam.pose)?;
    let (mut unit_err, mut incidence) = (0.0f64, 0.0f64);
    for row in 0..map.height {
        for col in 0..map.width {
            let r = map.ray(row, col);
            unit_err = unit_err.max((r.direction.norm() - 1.0).abs());
            incidence = incidence.max(r.direction.dot(&r.moment).abs());
        }
    }
    if let Some(out) = &a.out {
        std::fs::write(out, encode_stsp(map.shape(), &map.to_f32())?)?;
    }
    print_json(&json!({
        "shape": map.shape(),
        "max_unit_error": unit_err,
        "max_incidence": incidence,
    }))
}

fn canonicalize(a: CanonicalizeArgs) -> CliResult<()> {
    let (left, file_baseline) = read_camera(&a.left)?;
    let (right, _) = read_camera(&a.right)?;
    let baseline = a.baseline.or(file_baseline).ok_or(Error::BadBaseline(f64::NAN))?;
    let rig = canonicalize_rig(&left, &right, baseline)?;
    if let Some(p) = &a.out_left {
        std::fs::write(p, format_camera(&rig.left, Some(baseline)))?;
    }
    if let Some(p) = &a.out_right {
        std::fs::write(p, format_camera(&rig.right, Some(baseline)))?;
    }
    print_json(&json!({
        "baseline_m": baseline,
        "left_center": rig.left.pose.center().as_slice(),
        "right_center": rig.right.pose.center().as_slice(),
    }))
}

fn warp(a: WarpArgs) -> CliResult<()> {
    let img = read_image(&a.image)?;
    let disp = read_disparity(&a.disparity)?;
    let (out, m) = match a.mode {
        WarpMode::Backward => backward_warp(&img, &disp, a.direction.into())?,
        WarpMode::Forward => forward_warp(&img, &disp, a.direction.into())?,
    };
    write_image(&a.out, &out)?;
    if let Some(p) = &a.mask_out {
        write_mask(p, &m)?;
    }
    print_json(&json!({
        "valid": m.count(),
        "valid_fraction": m.count() as f64 / (m.height() * m.width()) as f64,
    }))
}

fn mask(a: MaskArgs) -> CliResult<()> {
    let dl = read_disparity(&a.left_disparity)?;
    let dr = read_disparity(&a.right_disparity)?;
    let m = lr_consistency_mask(&dl, &dr, a.tau)?;
    if let Some(p) = &a.out {
        write_mask(p, &m)?;
    }
    print_json(&json!({
        "valid": m.count(),
        "valid_fraction": m.count() as f64 / (m.height() * m.width()) as f64,
    }))
}

fn read_latent(path: &Path) -> CliResult<Latent> {
    let t = decode_stsp(&std::fs::read(path)?)?;
    let [c, h, w] = t.shape;
    Ok(Latent::new(c, h, w, t.data.iter().map(|&v| v as f64).collect())?)
}

fn loss(a: LossArgs) -> CliResult<()> {
    let w = LossWeights {
        alpha: a.alpha,
        lambda_pix: a.lambda_pix,
        lambda_warp: a.lambda_warp,
        ..LossWeights::default()
    };
    w.validate()?;
    let pred = read_image(&a.pred)?;
    let target = read_image(&a.target)?;
    let pix = pixel_loss(&pred, &target, &w)?;
    let warp = match (&a.source, &a.disparity) {
        (Some(s), Some(d)) => {
            let source = read_image(s)?;
            let disp = read_disparity(d)?;
            let m = match &a.mask {
                Some(p) => read_mask(p)?,
                None => ValidityMask::filled(source.height(), source.width(), true),
            };
            Some(warp_loss(&pred, &source, &disp, &m, a.direction.into())?)
        }
        _ => None,
    };
    let vel = match (&a.v_pred, &a.v_true) {
        (Some(p), Some(t)) => Some(velocity_loss(&read_latent(p)?, &read_latent(t)?, a.snr_weight)?),
        _ => None,
    };
    let total = total_loss(vel.as_ref(), &pix, warp.as_ref(), &w)?;
    print_json(&json!({
        "velocity": vel.map(|l| l.value),
        "pixel": pix.value,
        "warp": warp.map(|l| l.value),
        "total": total.value,
        "weights": w,
    }))
}

#[derive(Serialize)]
struct ScheduleRow {
    t: usize,
    beta: f64,
    alpha_bar: f64,
    sqrt_alpha_bar: f64,
    snr: f64,
    weight: f64,
}

fn schedule(a: ScheduleArgs, format: Format) -> CliResult<()> {
    let s = default_schedule(a.steps, a.zero_terminal_snr)?;
    let mut out = stdout_records(format);
    for t in 0..s.num_steps() {
        let ab = s.alpha_bar(t)?;
        out.write(&ScheduleRow {
            t,
            beta: s.betas()[t],
            alpha_bar: ab,
            sqrt_alpha_bar: ab.sqrt(),
            snr: s.snr(t)?,
            weight: min_snr_weight(t, &s, a.gamma)?,
        })?;
    }
    out.finish()
}

fn ddim_roundtrip(a: DdimArgs, seed: u64) -> CliResult<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let [c, h, w] = a.shape;
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let x0 = Latent::from_fn(c, h, w, &mut normal);
    let z = Latent::from_fn(c, h, w, &mut normal);
    let schedule = default_schedule(a.train_steps, !a.no_zero_terminal_snr)?;
    let sampler = DdimSampler::new(schedule.clone(), a.steps)?;
    let oracle = oracle_denoiser(x0.clone(), &schedule);
    let recovered = sampler.sample(&oracle, &(), &z)?;
    print_json(&json!({
        "train_steps": a.train_steps,
        "steps": a.steps,
        "zero_terminal_snr": !a.no_zero_terminal_snr,
        "first_timestep": sampler.timesteps()[0],
        "max_abs_error": recovered.max_abs_diff(&x0)?,
    }))
}

fn run_sgbm(a: SgbmArgs) -> CliResult<()> {
    let left = read_image(&a.left)?;
    let right = read_image(&a.right)?;
    let p = a.sgbm.params();
    let (dl, dr) = sgbm(&left, &right, &p)?;
    if let Some(o) = &a.out {
        write_disparity(o, &dl)?;
    }
    if let Some(o) = &a.out_right {
        write_disparity(o, &dr)?;
    }
    print_json(&json!({
        "valid_fraction_left": dl.valid_fraction(),
        "valid_fraction_right": dr.valid_fraction(),
        "params": p,
    }))
}

fn calibrate(a: CalibrateArgs, format: Format) -> CliResult<()> {
    let entries = scenes::read_manifest(&a.manifest)?;
    let search = a.search.config();
    search.validate()?;
    let params = a.sgbm.params();
    params.validate()?;
    let records = scenes::calibrate_all(&entries, &search, &params)?;
    let rows: Vec<scenes::CalibrationRow> = records.iter().map(Into::into).collect();
    match (&a.out, format) {
        (Some(p), _) => {
            let mut w = file_records(p, Format::Json)?;
            records.iter().try_for_each(|r| w.write(r))?;
            w.finish()?;
        }
        (None, Format::Json) => {
            let mut w = stdout_records(Format::Json);
            records.iter().try_for_each(|r| w.write(r))?;
            w.finish()?;
        }
        (None, Format::Csv) => {
            let mut w = stdout_records(Format::Csv);
            rows.iter().try_for_each(|r| w.write(r))?;
            w.finish()?;
        }
    }
    if let Some(p) = &a.summary {
        let mut w = file_records(p, Format::Csv)?;
        rows.iter().try_for_each(|r| w.write(r))?;
        w.finish()?;
    }
    Ok(())
}

fn evaluate(a: EvaluateArgs, format: Format) -> CliResult<()> {
    let entries = scenes::read_manifest(&a.manifest)?;
    let search = a.search.config();
    search.validate()?;
    let params = a.sgbm.params();
    params.validate()?;
    let records = scenes::evaluate_all(&entries, a.resize, &search, &params)?;
    let rows: Vec<scenes::EvaluationRow> = records.iter().map(Into::into).collect();
    match (&a.out, format) {
        (Some(p), _) => {
            let mut w = file_records(p, Format::Json)?;
            records.iter().try_for_each(|r| w.write(r))?;
            w.finish()?;
        }
        (None, Format::Json) => {
            let mut w = stdout_records(Format::Json);
            records.iter().try_for_each(|r| w.write(r))?;
            w.finish()?;
        }
        (None, Format::Csv) => {
            let mut w = stdout_records(Format::Csv);
            rows.iter().try_for_each(|r| w.write(r))?;
            w.finish()?;
        }
    }
    if let Some(p) = &a.summary {
        let metrics: Vec<_> = records.iter().map(|r| r.metrics.clone()).collect();
        let mut w = file_records(p, Format::Csv)?;
        w.write(&summarize(&metrics))?;
        w.finish()?;
    }
    Ok(())
}

fn read_stdin() -> CliResult<String> {
    let mut s = String::new();
    std::io::stdin().read_to_string(&mut s)?;
    Ok(s)
}

fn mix(format: Format) -> CliResult<()> {
    let spec: MixSpec = serde_json::from_str(&read_stdin()?)?;
    let mut out = stdout_records(format);
    for w in mix_weights(&spec)? {
        out.write(&w)?;
    }
    out.finish()
}

#[derive(Serialize)]
struct PairRow {
    i: usize,
    j: usize,
    baseline: f64,
}

fn pairs(format: Format) -> CliResult<()> {
    let text = read_stdin()?;
    let offsets: Vec<f64> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| CliError::Input(format!("offset {s:?}: {e}"))))
        .collect::<CliResult<_>>()?;
    let mut out = stdout_records(format);
    for (i, j) in tuple_pairs(&offsets)? {
        out.write(&PairRow {
            i,
            j,
            baseline: offsets[j] - offsets[i],
        })?;
    }
    out.finish()
}
