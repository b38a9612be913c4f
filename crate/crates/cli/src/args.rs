use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stereospace_kit::harness::SearchConfig;
use stereospace_kit::imaging::WarpDirection;
use stereospace_kit::losses::LossWeights;
use stereospace_kit::matching::SgbmParams;

#[derive(Debug, Parser)]
#[command(
    name = "stsp",
    version,
    about = "Rectified-stereo geometry, warping, losses, diffusion math, SGBM and evaluation tools"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Seed for every random draw in the run
    #[arg(long, global = true, default_value_t = 0, display_order = 900)]
    pub seed: u64,
    /// Worker threads (0 = one per core); STSP_THREADS takes precedence
    #[arg(long, global = true, display_order = 901)]
    pub threads: Option<usize>,
    /// Output format for records on stdout [default: json, csv for `schedule`]
    #[arg(long, global = true, value_enum, display_order = 902)]
    pub format: Option<Format>,
    /// Log more to stderr (repeat for debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count, display_order = 903)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    LeftToRight,
    RightToLeft,
}

impl From<Direction> for WarpDirection {
    fn from(d: Direction) -> Self {
        match d {
            Direction::LeftToRight => WarpDirection::LeftToRight,
            Direction::RightToLeft => WarpDirection::RightToLeft,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WarpMode {
    Backward,
    Forward,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-pixel Plücker ray map of a camera
    Plucker(PluckerArgs),
    /// Move a rectified camera pair into the canonical stereo frame
    Canonicalize(CanonicalizeArgs),
    /// Warp an image along a disparity map
    Warp(WarpArgs),
    /// Left-right consistency mask from two disparity maps
    Mask(MaskArgs),
    /// Pixel, warp and velocity losses and their weighted total
    Loss(LossArgs),
    /// Noise schedule table
    Schedule(ScheduleArgs),
    /// Sample with the analytic oracle denoiser and report the recovery error
    DdimRoundtrip(DdimArgs),
    /// Semi-global block matching
    Sgbm(SgbmArgs),
    /// Per-scene scale calibration over a scene manifest
    Calibrate(CalibrateArgs),
    /// Per-scene metrics over a scene manifest
    Evaluate(EvaluateArgs),
    /// Effective dataset sizes for a mixing spec read from stdin
    MixWeights,
    /// View pairs of a multi-baseline tuple; offsets read from stdin
    TuplePairs,
    /// Run the built-in invariant suite
    Selftest,
}

#[derive(Debug, Args)]
pub struct PluckerArgs {
    /// Camera file
    #[arg(long)]
    pub camera: PathBuf,
    /// Write the 6xHxW map as an STSP tensor
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the ray of one pixel as ROW,COL
    #[arg(long, value_parser = parse_pixel)]
    pub pixel: Option<(usize, usize)>,
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once(',').ok_or("expected ROW,COL")?;
    Ok((
        r.trim().parse().map_err(|e| format!("row: {e}"))?,
        c.trim().parse().map_err(|e| format!("col: {e}"))?,
    ))
}

#[derive(Debug, Args)]
pub struct CanonicalizeArgs {
    /// Left camera file
    #[arg(long)]
    pub left: PathBuf,
    /// Right camera file
    #[arg(long)]
    pub right: PathBuf,
    /// Metric baseline; defaults to `baseline_m` in the left camera file
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Write the canonical left camera here
    #[arg(long)]
    pub out_left: Option<PathBuf>,
    /// Write the canonical right camera here
    #[arg(long)]
    pub out_right: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WarpArgs {
    /// Image to resample (backward) or splat (forward)
    #[arg(long)]
    pub image: PathBuf,
    /// Disparity map (PFM or STSP)
    #[arg(long)]
    pub disparity: PathBuf,
    /// Which view the disparity is referenced to
    #[arg(long, value_enum, default_value = "left-to-right")]
    pub direction: Direction,
    /// Bilinear resampling or z-buffered splatting
    #[arg(long, value_enum, default_value = "backward")]
    pub mode: WarpMode,
    /// Warped image (.ppm/.pgm, or .stsp)
    #[arg(long)]
    pub out: PathBuf,
    /// Validity mask (PGM)
    #[arg(long)]
    pub mask_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Left-referenced disparity
    #[arg(long)]
    pub left_disparity: PathBuf,
    /// Right-referenced disparity
    #[arg(long)]
    pub right_disparity: PathBuf,
    /// Maximum left-right disagreement in pixels
    #[arg(long, default_value_t = stereospace_kit::imaging::DEFAULT_LR_THRESHOLD)]
    pub tau: f32,
    /// Mask output (PGM)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossArgs {
    /// Predicted view
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference for the pixel loss
    #[arg(long)]
    pub target: PathBuf,
    /// Source view for the warp loss
    #[arg(long, requires = "disparity")]
    pub source: Option<PathBuf>,
    /// Disparity of the source view
    #[arg(long, requires = "source")]
    pub disparity: Option<PathBuf>,
    /// Optional mask restricting the warp loss (PGM)
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Left-to-right when the source is the left view
    #[arg(long, value_enum, default_value = "left-to-right")]
    pub direction: Direction,
    /// Predicted velocity (STSP tensor)
    #[arg(long, requires = "v_true")]
    pub v_pred: Option<PathBuf>,
    /// Target velocity (STSP tensor)
    #[arg(long, requires = "v_pred")]
    pub v_true: Option<PathBuf>,
    /// Min-SNR weight applied to the velocity term
    #[arg(long)]
    pub snr_weight: Option<f64>,
    /// SSIM share of the pixel loss
    #[arg(long, default_value_t = LossWeights::default().alpha)]
    pub alpha: f64,
    /// Weight of the pixel loss
    #[arg(long, default_value_t = LossWeights::default().lambda_pix)]
    pub lambda_pix: f64,
    /// Weight of the warp loss
    #[arg(long, default_value_t = LossWeights::default().lambda_warp)]
    pub lambda_warp: f64,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    /// Training timesteps
    #[arg(long, default_value_t = stereospace_kit::diffusion::DEFAULT_TRAIN_STEPS)]
    pub steps: usize,
    /// Rescale so the last timestep is pure noise
    #[arg(long)]
    pub zero_terminal_snr: bool,
    /// Min-SNR clamp for the weight column
    #[arg(long, default_value_t = LossWeights::default().gamma_snr)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct DdimArgs {
    /// Training timesteps of the schedule
    #[arg(long, default_value_t = stereospace_kit::diffusion::DEFAULT_TRAIN_STEPS)]
    pub train_steps: usize,
    /// Sampling steps
    #[arg(long, default_value_t = stereospace_kit::diffusion::DEFAULT_INFERENCE_STEPS)]
    pub steps: usize,
    /// Latent shape as C,H,W
    #[arg(long, default_value = "4,16,16", value_parser = parse_shape)]
    pub shape: [usize; 3],
    /// Keep the terminal SNR of the plain schedule
    #[arg(long)]
    pub no_zero_terminal_snr: bool,
}

fn parse_shape(s: &str) -> Result<[usize; 3], String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [c, h, w] if c * h * w > 0 => Ok([*c, *h, *w]),
        _ => Err("expected three positive integers C,H,W".into()),
    }
}

#[derive(Debug, Clone, Args)]
pub struct SgbmOpts {
    /// Smallest disparity searched
    #[arg(long, default_value_t = SgbmParams::default().min_disparity, allow_negative_numbers = true)]
    pub min_disparity: i32,
    /// Disparity search range, a multiple of 16
    #[arg(long, default_value_t = SgbmParams::default().num_disparities)]
    pub num_disparities: usize,
    /// Odd side of the cost aggregation block
    #[arg(long, default_value_t = SgbmParams::default().block_size)]
    pub block_size: usize,
    /// Penalty for a one-pixel disparity change along a path
    #[arg(long, default_value_t = SgbmParams::default().p1)]
    pub p1: u16,
    /// Penalty for larger disparity jumps
    #[arg(long, default_value_t = SgbmParams::default().p2)]
    pub p2: u16,
    /// Aggregation paths (4 or 8)
    #[arg(long, default_value_t = SgbmParams::default().num_paths)]
    pub paths: usize,
    /// Percent margin for the uniqueness check
    #[arg(long, default_value_t = SgbmParams::default().uniqueness_ratio)]
    pub uniqueness: u32,
    /// Left-right check tolerance in pixels
    #[arg(long, default_value_t = SgbmParams::default().lr_threshold)]
    pub lr_threshold: f32,
}

impl SgbmOpts {
    pub fn params(&self) -> SgbmParams {
        SgbmParams {
            min_disparity: self.min_disparity,
            num_disparities: self.num_disparities,
            block_size: self.block_size,
            p1: self.p1,
            p2: self.p2,
            num_paths: self.paths,
            uniqueness_ratio: self.uniqueness,
            lr_threshold: self.lr_threshold,
        }
    }
}

#[derive(Debug, Args)]
pub struct SgbmArgs {
    /// Left view
    #[arg(long)]
    pub left: PathBuf,
    /// Right view
    #[arg(long)]
    pub right: PathBuf,
    /// Left-referenced disparity (PFM, or STSP by extension)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Right-referenced disparity
    #[arg(long)]
    pub out_right: Option<PathBuf>,
    #[command(flatten)]
    pub sgbm: SgbmOpts,
}

#[derive(Debug, Clone, Args)]
pub struct SearchOpts {
    /// Lower bound of the scale search
    #[arg(long, default_value_t = SearchConfig::default().lo)]
    pub lo: f64,
    /// Upper bound of the scale search
    #[arg(long, default_value_t = SearchConfig::default().hi)]
    pub hi: f64,
    /// Coarse-to-fine refinement levels
    #[arg(long, default_value_t = SearchConfig::default().levels)]
    pub levels: usize,
    /// Scales evaluated per level
    #[arg(long, default_value_t = SearchConfig::default().samples_per_level)]
    pub samples: usize,
    /// Interval shrink factor between levels
    #[arg(long, default_value_t = SearchConfig::default().shrink)]
    pub shrink: f64,
    /// Minimum fraction of jointly valid pixels for a candidate to count
    #[arg(long, default_value_t = SearchConfig::default().min_joint_valid)]
    pub min_joint_valid: f64,
}

impl SearchOpts {
    pub fn config(&self) -> SearchConfig {
        SearchConfig {
            lo: self.lo,
            hi: self.hi,
            levels: self.levels,
            samples_per_level: self.samples,
            shrink: self.shrink,
            min_joint_valid: self.min_joint_valid,
        }
    }
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// JSON-lines scene manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-scene JSON-lines results (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV summary, one row per scene
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchOpts,
    #[command(flatten)]
    pub sgbm: SgbmOpts,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// JSON-lines scene manifest
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-scene JSON-lines results (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV summary with per-dataset means
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Short-side resize and center crop of every image to HxW
    #[arg(long, value_parser = parse_size)]
    pub resize: Option<(usize, usize)>,
    #[command(flatten)]
    pub search: SearchOpts,
    #[command(flatten)]
    pub sgbm: SgbmOpts,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or("expected HxW")?;
    Ok((
        h.trim().parse().map_err(|e| format!("height: {e}"))?,
        w.trim().parse().map_err(|e| format!("width: {e}"))?,
    ))
}
