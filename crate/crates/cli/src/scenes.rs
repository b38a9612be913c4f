//! Scene manifests and the per-scene calibration/evaluation drivers.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stereospace_kit::geometry::parse_camera;
use stereospace_kit::harness::{
    calibrate_scale, evaluate_pair, resize_center_crop, CalibrationResult, EvalRecord, SearchConfig,
};
use stereospace_kit::imaging::{forward_warp, read_disparity, read_image, DisparityMap, ImageBuffer, WarpDirection};
use stereospace_kit::matching::SgbmParams;
use stereospace_kit::{Error, Result};

use crate::output::{CliError, CliResult};

/// One manifest line. Relative paths resolve against the manifest's directory.
///
/// `disparity` is the method's own unscaled left-referenced disparity; the
/// built-in generator splats `left` along `scale * disparity`. It is never a
/// ground-truth map.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    #[serde(default)]
    pub id: Option<String>,
    pub left: PathBuf,
    pub right: PathBuf,
    #[serde(default)]
    pub disparity: Option<PathBuf>,
    #[serde(default)]
    pub camera: Option<PathBuf>,
    #[serde(default)]
    pub synth_right: Option<PathBuf>,
    #[serde(default)]
    pub scale: Option<f64>,
}

pub fn read_manifest(path: &Path) -> CliResult<Vec<SceneEntry>> {
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut e: SceneEntry = serde_json::from_str(line)
            .map_err(|err| CliError::Input(format!("manifest line {}: {err}", n + 1)))?;
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut e.left);
        fix(&mut e.right);
        for p in [&mut e.disparity, &mut e.camera, &mut e.synth_right].into_iter().flatten() {
            fix(p);
        }
        if e.id.is_none() {
            e.id = Some(format!("scene{:04}", entries.len()));
        }
        entries.push(e);
    }
    if entries.is_empty() {
        return Err(CliError::Input("manifest has no scenes".into()));
    }
    Ok(entries)
}

/// Forward-splat generator driven by a method's unscaled disparity.
pub struct DisparityGenerator {
    pub disparity: DisparityMap,
}

impl stereospace_kit::harness::GeneratorInterface for DisparityGenerator {
    fn generate(&self, source: &ImageBuffer, scale: f64) -> Result<ImageBuffer> {
        forward_warp(source, &self.disparity.scaled(scale as f32), WarpDirection::LeftToRight).map(|(img, _)| img)
    }
}

struct LoadedScene {
    left: ImageBuffer,
    right: ImageBuffer,
    generator: Option<DisparityGenerator>,
}

fn load(entry: &SceneEntry) -> Result<LoadedScene> {
    let left = read_image(&entry.left)?;
    let right = read_image(&entry.right)?;
    left.same_shape(&right)?;
    if let Some(cam) = &entry.camera {
        let (camera, _) = parse_camera(&std::fs::read_to_string(cam)?)?;
        let intr = camera.intrinsics;
        if intr.width != left.width() || intr.height != left.height() {
            return Err(Error::ShapeMismatch(format!(
                "camera is {}x{}, images are {}x{}",
                intr.height,
                intr.width,
                left.height(),
                left.width()
            )));
        }
    }
    let generator = match &entry.disparity {
        Some(p) => Some(DisparityGenerator {
            disparity: read_disparity(p)?,
        }),
        None => None,
    };
    Ok(LoadedScene { left, right, generator })
}

#[derive(Debug, Serialize)]
pub struct CalibrationRecord {
    pub id: String,
    #[serde(flatten)]
    pub result: CalibrationResult,
    pub search: SearchConfig,
    pub sgbm: SgbmParams,
    pub convention: &'static str,
}

#[derive(Debug, Serialize)]
pub struct CalibrationRow {
    pub id: String,
    pub best_scale: f64,
    pub best_rmse: f64,
    pub final_step: f64,
    pub candidates: usize,
}

impl From<&CalibrationRecord> for CalibrationRow {
    fn from(r: &CalibrationRecord) -> Self {
        Self {
            id: r.id.clone(),
            best_scale: r.result.best_scale,
            best_rmse: r.result.best_rmse,
            final_step: r.result.final_step,
            candidates: r.result.trace.len(),
        }
    }
}

fn id_of(e: &SceneEntry) -> String {
    e.id.clone().unwrap_or_default()
}

fn with_scene<T>(e: &SceneEntry, r: Result<T>) -> CliResult<T> {
    r.map_err(|err| CliError::Scene(id_of(e), err))
}

pub fn calibrate_all(
    entries: &[SceneEntry],
    search: &SearchConfig,
    params: &SgbmParams,
) -> CliResult<Vec<CalibrationRecord>> {
    entries
        .par_iter()
        .map(|e| {
            let scene = with_scene(e, load(e))?;
            let gen = scene
                .generator
                .as_ref()
                .ok_or_else(|| CliError::Input(format!("scene {}: calibrate needs `disparity`", id_of(e))))?;
            let result = with_scene(e, calibrate_scale(&scene.left, &scene.right, gen, params, search))?;
            log::info!("{}: scale {} rmse {}", id_of(e), result.best_scale, result.best_rmse);
            Ok(CalibrationRecord {
                id: id_of(e),
                result,
                search: *search,
                sgbm: *params,
                convention: stereospace_kit::harness::MATCHING_CONVENTION,
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct EvaluationRecord {
    pub id: String,
    /// Generator scale used for synthesis, when a generator was involved.
    pub scale: Option<f64>,
    #[serde(flatten)]
    pub metrics: EvalRecord,
}

#[derive(Debug, Serialize)]
pub struct EvaluationRow {
    pub id: String,
    pub scale: Option<f64>,
    pub psnr: Option<f64>,
    pub psnr_infinite: bool,
    pub ssim: f64,
    pub disparity_rmse: Option<f64>,
    pub joint_valid_fraction: f64,
    pub surrogate_consistency: f64,
}

impl From<&EvaluationRecord> for EvaluationRow {
    fn from(r: &EvaluationRecord) -> Self {
        let m = &r.metrics;
        Self {
            id: r.id.clone(),
            scale: r.scale,
            psnr: m.psnr,
            psnr_infinite: m.psnr_infinite,
            ssim: m.ssim,
            disparity_rmse: m.disparity_rmse,
            joint_valid_fraction: m.joint_valid_fraction,
            surrogate_consistency: m.surrogate_consistency,
        }
    }
}

fn evaluate_one(
    e: &SceneEntry,
    resize: Option<(usize, usize)>,
    search: &SearchConfig,
    params: &SgbmParams,
) -> Result<EvaluationRecord> {
    let mut scene = load(e)?;
    if let Some((h, w)) = resize {
        scene.left = resize_center_crop(&scene.left, h, w)?;
        scene.right = resize_center_crop(&scene.right, h, w)?;
    }
    let (synth, scale) = match (&e.synth_right, &scene.generator) {
        (Some(p), _) => {
            let img = read_image(p)?;
            let img = match resize {
                Some((h, w)) => resize_center_crop(&img, h, w)?,
                None => img,
            };
            (img, e.scale)
        }
        (None, Some(gen)) => {
            use stereospace_kit::harness::GeneratorInterface;
            let scale = match e.scale {
                Some(s) => s,
                None => calibrate_scale(&scene.left, &scene.right, gen, params, search)?.best_scale,
            };
            (gen.generate(&scene.left, scale)?, Some(scale))
        }
        (None, None) => {
            return Err(Error::Format("scene needs `synth_right` or `disparity`".into()));
        }
    };
    Ok(EvaluationRecord {
        id: id_of(e),
        scale,
        metrics: evaluate_pair(&scene.left, &scene.right, &synth, params)?,
    })
}

pub fn evaluate_all(
    entries: &[SceneEntry],
    resize: Option<(usize, usize)>,
    search: &SearchConfig,
    params: &SgbmParams,
) -> CliResult<Vec<EvaluationRecord>> {
    entries
        .par_iter()
        .map(|e| with_scene(e, evaluate_one(e, resize, search, params)))
        .collect()
}
