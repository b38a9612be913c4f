//! Noise schedules, velocity-parameterization algebra, deterministic DDIM
//! sampling, classifier-free guidance, and min-SNR loss weighting.

mod latent;

pub use latent::Latent;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 0.00085;
pub const DEFAULT_BETA_END: f64 = 0.012;
pub const DEFAULT_INFERENCE_STEPS: usize = 50;
pub const DEFAULT_NOISE_OFFSET: f64 = 0.05;
pub const DEFAULT_GUIDANCE_SCALE: f64 = 1.5;
pub const DEFAULT_UNCOND_DROP: f64 = 0.1;

/// Per-timestep β and cumulative ᾱ.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    zero_terminal_snr: bool,
}

impl NoiseSchedule {
    pub fn num_steps(&self) -> usize {
        self.betas.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    pub fn is_zero_terminal_snr(&self) -> bool {
        self.zero_terminal_snr
    }

    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bars.get(t).copied().ok_or(Error::BadTimestep {
            t,
            num_steps: self.num_steps(),
        })
    }

    /// ᾱ_t / (1 − ᾱ_t); infinite when ᾱ_t = 1.
    pub fn snr(&self, t: usize) -> Result<f64> {
        let ab = self.alpha_bar(t)?;
        Ok(if ab >= 1.0 { f64::INFINITY } else { ab / (1.0 - ab) })
    }
}

/// β_t = (√β₀ + t/(T−1)·(√β₁ − √β₀))², ᾱ_t = Π_{s≤t}(1 − β_s).
pub fn scaled_linear_schedule(num_steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if num_steps < 2 {
        return Err(Error::InvalidRange(format!("need at least 2 steps, got {num_steps}")));
    }
    if !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0) {
        return Err(Error::InvalidRange(format!(
            "need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}"
        )));
    }
    let (s0, s1) = (beta_start.sqrt(), beta_end.sqrt());
    let last = (num_steps - 1) as f64;
    let betas: Vec<f64> = (0..num_steps)
        .map(|t| {
            let r = s0 + (t as f64 / last) * (s1 - s0);
            r * r
        })
        .collect();
    let mut alpha_bars = Vec::with_capacity(num_steps);
    let mut acc = 1.0;
    for b in &betas {
        acc *= 1.0 - b;
        alpha_bars.push(acc);
    }
    Ok(NoiseSchedule {
        betas,
        alpha_bars,
        zero_terminal_snr: false,
    })
}

/// Shift and scale √ᾱ so the first value is kept and the last becomes 0.
///
/// The terminal β becomes exactly 1.
pub fn rescale_zero_terminal_snr(s: &NoiseSchedule) -> Result<NoiseSchedule> {
    let sqrt_ab: Vec<f64> = s.alpha_bars.iter().map(|a| a.sqrt()).collect();
    let first = sqrt_ab[0];
    let last = *sqrt_ab.last().unwrap();
    if !(first > last) {
        return Err(Error::DegenerateSchedule(format!(
            "sqrt(alpha_bar) must decrease, got {first} -> {last}"
        )));
    }
    let factor = first / (first - last);
    let alpha_bars: Vec<f64> = sqrt_ab
        .iter()
        .map(|v| {
            let r = (v - last) * factor;
            r * r
        })
        .collect();
    let betas = alpha_bars
        .iter()
        .enumerate()
        .map(|(t, ab)| {
            if t == 0 {
                1.0 - ab
            } else {
                1.0 - ab / alpha_bars[t - 1]
            }
        })
        .collect();
    Ok(NoiseSchedule {
        betas,
        alpha_bars,
        zero_terminal_snr: true,
    })
}

/// Scaled-linear schedule with the default endpoints, optionally rescaled to
/// zero terminal SNR.
pub fn default_schedule(num_steps: usize, zero_terminal_snr: bool) -> Result<NoiseSchedule> {
    let s = scaled_linear_schedule(num_steps, DEFAULT_BETA_START, DEFAULT_BETA_END)?;
    if zero_terminal_snr {
        rescale_zero_terminal_snr(&s)
    } else {
        Ok(s)
    }
}

/// `z = √ᾱ x₀ + √(1−ᾱ) ε′` with `ε′ = ε + offset · channel_offsets[c]`.
///
/// `channel_offsets` holds one draw per channel from the caller's random
/// source.
pub fn add_noise(
    x0: &Latent,
    eps: &Latent,
    t: usize,
    s: &NoiseSchedule,
    noise_offset: f64,
    channel_offsets: &[f64],
) -> Result<Latent> {
    x0.same_shape(eps)?;
    let ab = s.alpha_bar(t)?;
    if channel_offsets.len() != x0.channels() {
        return Err(Error::ShapeMismatch(format!(
            "{} channel offsets for {} channels",
            channel_offsets.len(),
            x0.channels()
        )));
    }
    let [c, h, w] = x0.shape();
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let plane = h * w;
    let data = (0..c * plane)
        .map(|k| {
            let e = eps.data()[k] + noise_offset * channel_offsets[k / plane];
            sa * x0.data()[k] + sb * e
        })
        .collect();
    Latent::new(c, h, w, data)
}

/// Clean sample from a velocity at a given ᾱ: `√ᾱ z − √(1−ᾱ) v`.
pub fn x0_from_v_at(z_t: &Latent, v: &Latent, alpha_bar: f64) -> Result<Latent> {
    z_t.same_shape(v)?;
    let (sa, sb) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(z_t.zip_map(v, |z, v| sa * z - sb * v))
}

pub fn x0_from_v(z_t: &Latent, v: &Latent, t: usize, s: &NoiseSchedule) -> Result<Latent> {
    x0_from_v_at(z_t, v, s.alpha_bar(t)?)
}

/// Noise from a velocity at a given ᾱ: `√ᾱ v + √(1−ᾱ) z`.
pub fn eps_from_v_at(z_t: &Latent, v: &Latent, alpha_bar: f64) -> Result<Latent> {
    z_t.same_shape(v)?;
    let (sa, sb) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    Ok(z_t.zip_map(v, |z, v| sa * v + sb * z))
}

/// Deterministic (η = 0) DDIM update from `t` to `t_prev`.
pub fn ddim_step(z_t: &Latent, v_pred: &Latent, t: usize, t_prev: usize, s: &NoiseSchedule) -> Result<Latent> {
    let ab = s.alpha_bar(t)?;
    let ab_prev = s.alpha_bar(t_prev)?;
    if t_prev > t {
        return Err(Error::BadTimestep {
            t: t_prev,
            num_steps: s.num_steps(),
        });
    }
    if t_prev == t {
        return Ok(z_t.clone());
    }
    let x0 = x0_from_v_at(z_t, v_pred, ab)?;
    let eps = eps_from_v_at(z_t, v_pred, ab)?;
    let (sa, sb) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    Ok(x0.zip_map(&eps, |x, e| sa * x + sb * e))
}

/// `num` indices spread uniformly over `[0, T−1]` (both ends included),
/// returned in descending order.
pub fn inference_timesteps(num_train_steps: usize, num: usize) -> Result<Vec<usize>> {
    if num == 0 || num > num_train_steps {
        return Err(Error::InvalidRange(format!(
            "{num} inference steps for a {num_train_steps}-step schedule"
        )));
    }
    if num == 1 {
        return Ok(vec![num_train_steps - 1]);
    }
    let last = (num_train_steps - 1) as f64;
    let mut steps: Vec<usize> = (0..num)
        .map(|k| (k as f64 * last / (num - 1) as f64).round() as usize)
        .collect();
    steps.dedup();
    steps.reverse();
    Ok(steps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub scale: f64,
    /// Training-side probability of dropping the condition; unused at
    /// inference.
    pub uncond_drop_ratio: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            scale: DEFAULT_GUIDANCE_SCALE,
            uncond_drop_ratio: DEFAULT_UNCOND_DROP,
        }
    }
}

/// `v_uncond + scale · (v_cond − v_uncond)`.
pub fn cfg_combine(v_uncond: &Latent, v_cond: &Latent, g: &GuidanceConfig) -> Result<Latent> {
    v_uncond.same_shape(v_cond)?;
    if !g.scale.is_finite() {
        return Err(Error::BadParams(format!("guidance scale {}", g.scale)));
    }
    let k = g.scale;
    Ok(v_uncond.zip_map(v_cond, |u, c| {
        if k == 1.0 {
            c
        } else if k == 0.0 {
            u
        } else {
            u + k * (c - u)
        }
    }))
}

/// Min-SNR-γ weight for velocity targets: `min(SNR, γ) / (SNR + 1)`.
pub fn min_snr_weight(t: usize, s: &NoiseSchedule, gamma: f64) -> Result<f64> {
    let snr = s.snr(t)?;
    Ok(min_snr_weight_from_snr(snr, gamma))
}

pub fn min_snr_weight_from_snr(snr: f64, gamma: f64) -> f64 {
    if snr.is_infinite() {
        return if gamma.is_infinite() { 1.0 } else { 0.0 };
    }
    snr.min(gamma) / (snr + 1.0)
}

/// Velocity predictor `(z_t, t, condition) → v`.
pub trait Denoiser {
    type Condition;

    fn predict_velocity(&self, z_t: &Latent, t: usize, condition: &Self::Condition) -> Result<Latent>;
}

/// Returns the exact velocity that maps every `z_t` back to a known clean
/// sample; lets the sampler be checked without a network.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    x0: Latent,
    schedule: NoiseSchedule,
}

pub fn oracle_denoiser(x0_known: Latent, schedule: &NoiseSchedule) -> OracleDenoiser {
    OracleDenoiser {
        x0: x0_known,
        schedule: schedule.clone(),
    }
}

impl Denoiser for OracleDenoiser {
    type Condition = ();

    fn predict_velocity(&self, z_t: &Latent, t: usize, _: &()) -> Result<Latent> {
        z_t.same_shape(&self.x0)?;
        let ab = self.schedule.alpha_bar(t)?;
        if ab >= 1.0 {
            // Any velocity reproduces z_t here.
            return Ok(Latent::zeros(z_t.shape()[0], z_t.shape()[1], z_t.shape()[2]));
        }
        let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(z_t.zip_map(&self.x0, |z, x| (sa * z - x) / sb))
    }
}

/// Deterministic DDIM sampler over a fixed set of timesteps.
#[derive(Debug, Clone)]
pub struct DdimSampler {
    schedule: NoiseSchedule,
    timesteps: Vec<usize>,
}

impl DdimSampler {
    pub fn new(schedule: NoiseSchedule, num_inference_steps: usize) -> Result<Self> {
        let timesteps = inference_timesteps(schedule.num_steps(), num_inference_steps)?;
        Ok(Self { schedule, timesteps })
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.timesteps
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Run from `z_init` at the first (largest) timestep and return the
    /// clean-sample estimate at the last one.
    pub fn sample<D: Denoiser>(&self, denoiser: &D, condition: &D::Condition, z_init: &Latent) -> Result<Latent> {
        self.sample_with(z_init, |z, t| denoiser.predict_velocity(z, t, condition))
    }

    /// Classifier-free guided sampling.
    pub fn sample_guided<D: Denoiser>(
        &self,
        denoiser: &D,
        condition: &D::Condition,
        unconditional: &D::Condition,
        guidance: &GuidanceConfig,
        z_init: &Latent,
    ) -> Result<Latent> {
        self.sample_with(z_init, |z, t| {
            let vc = denoiser.predict_velocity(z, t, condition)?;
            let vu = denoiser.predict_velocity(z, t, unconditional)?;
            cfg_combine(&vu, &vc, guidance)
        })
    }

    fn sample_with(&self, z_init: &Latent, mut predict: impl FnMut(&Latent, usize) -> Result<Latent>) -> Result<Latent> {
        let mut z = z_init.clone();
        for (k, &t) in self.timesteps.iter().enumerate() {
            let v = predict(&z, t)?;
            match self.timesteps.get(k + 1) {
                Some(&t_prev) => z = ddim_step(&z, &v, t, t_prev, &self.schedule)?,
                None => return x0_from_v(&z, &v, t, &self.schedule),
            }
        }
        unreachable!("timesteps is never empty")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::velocity_target;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_latent(rng: &mut ChaCha8Rng, shape: [usize; 3]) -> Latent {
        Latent::from_fn(shape[0], shape[1], shape[2], || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn scaled_linear_direct_product() {
        let s = scaled_linear_schedule(1000, 0.00085, 0.012).unwrap();
        assert_eq!(s.num_steps(), 1000);
        assert_eq!(s.alpha_bars()[0], 1.0 - 0.00085);
        assert!((s.betas()[999] - 0.012).abs() < 1e-15);
        assert!(s.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        let mut prod = 1.0;
        for t in 0..1000 {
            let frac = t as f64 / 999.0;
            let b = (0.00085f64.sqrt() + frac * (0.012f64.sqrt() - 0.00085f64.sqrt())).powi(2);
            prod *= 1.0 - b;
        }
        assert!((s.alpha_bars()[999] - prod).abs() < 1e-15);
    }

    #[test]
    fn two_step_schedule() {
        let s = scaled_linear_schedule(2, 0.1, 0.2).unwrap();
        assert_eq!(s.betas().len(), 2);
        assert!((s.alpha_bars()[1] - 0.9 * 0.8).abs() < 1e-15);
    }

    #[test]
    fn schedule_rejects_bad_range() {
        assert!(matches!(scaled_linear_schedule(10, 0.2, 0.1), Err(Error::InvalidRange(_))));
        assert!(scaled_linear_schedule(1, 0.1, 0.2).is_err());
        assert!(scaled_linear_schedule(10, 0.1, 1.0).is_err());
    }

    #[test]
    fn zero_terminal_rescale() {
        let s = scaled_linear_schedule(1000, 0.00085, 0.012).unwrap();
        let z = rescale_zero_terminal_snr(&s).unwrap();
        assert!(z.is_zero_terminal_snr());
        assert_eq!(z.alpha_bars()[999].sqrt(), 0.0);
        assert!((z.alpha_bars()[0].sqrt() - s.alpha_bars()[0].sqrt()).abs() < 1e-12);
        assert!(z.alpha_bars().windows(2).all(|w| w[1] < w[0]));
        assert_eq!(z.betas()[999], 1.0);

        let again = rescale_zero_terminal_snr(&z).unwrap();
        for (a, b) in again.alpha_bars().iter().zip(z.alpha_bars()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rescale_rejects_flat() {
        let flat = NoiseSchedule {
            betas: vec![0.0, 0.0],
            alpha_bars: vec![0.5, 0.5],
            zero_terminal_snr: false,
        };
        assert!(matches!(rescale_zero_terminal_snr(&flat), Err(Error::DegenerateSchedule(_))));
    }

    #[test]
    fn add_noise_endpoints_and_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = random_latent(&mut rng, [2, 3, 4]);
        let eps = random_latent(&mut rng, [2, 3, 4]);
        let s = default_schedule(1000, true).unwrap();
        let z = add_noise(&x0, &eps, 999, &s, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(z, eps);
        let a = add_noise(&x0, &eps, 10, &s, 0.05, &[0.0, 0.0]).unwrap();
        let b = add_noise(&x0, &eps, 10, &s, 0.0, &[0.3, -0.2]).unwrap();
        assert_eq!(a, b);
        let shifted = add_noise(&x0, &eps, 999, &s, 0.05, &[1.0, 2.0]).unwrap();
        assert!((shifted.data()[0] - eps.data()[0] - 0.05).abs() < 1e-15);
        assert!((shifted.data()[12] - eps.data()[12] - 0.1).abs() < 1e-15);
        assert!(matches!(add_noise(&x0, &eps, 1000, &s, 0.0, &[0.0, 0.0]), Err(Error::BadTimestep { .. })));
        assert!(add_noise(&x0, &eps, 1, &s, 0.0, &[0.0]).is_err());
    }

    #[test]
    fn x0_from_v_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let z = random_latent(&mut rng, [1, 2, 2]);
        let v = random_latent(&mut rng, [1, 2, 2]);
        assert_eq!(x0_from_v_at(&z, &v, 1.0).unwrap(), z);
        assert_eq!(x0_from_v_at(&z, &v, 0.0).unwrap(), v.map(|x| -x));
    }

    #[test]
    fn noise_velocity_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = default_schedule(1000, true).unwrap();
        for _ in 0..20 {
            let x0 = random_latent(&mut rng, [4, 5, 6]);
            let eps = random_latent(&mut rng, [4, 5, 6]);
            let t = rng.gen_range(0..1000);
            let z = add_noise(&x0, &eps, t, &s, 0.0, &[0.0; 4]).unwrap();
            let v = velocity_target(&x0, &eps, s.alpha_bar(t).unwrap()).unwrap();
            let back = x0_from_v(&z, &v, t, &s).unwrap();
            assert!(back.max_abs_diff(&x0).unwrap() < 1e-6);
        }
    }

    #[test]
    fn ddim_identity_and_bad_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = default_schedule(100, false).unwrap();
        let z = random_latent(&mut rng, [1, 2, 2]);
        let v = random_latent(&mut rng, [1, 2, 2]);
        assert_eq!(ddim_step(&z, &v, 40, 40, &s).unwrap(), z);
        assert!(matches!(ddim_step(&z, &v, 10, 20, &s), Err(Error::BadTimestep { .. })));
        assert!(ddim_step(&z, &v, 100, 20, &s).is_err());
    }

    #[test]
    fn timesteps_cover_both_ends() {
        let ts = inference_timesteps(1000, 50).unwrap();
        assert_eq!(ts.len(), 50);
        assert_eq!(ts[0], 999);
        assert_eq!(*ts.last().unwrap(), 0);
        assert!(ts.windows(2).all(|w| w[0] > w[1]));
        assert!(inference_timesteps(10, 11).is_err());
    }

    #[test]
    fn oracle_denoiser_recovers_x0_at_every_t() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = default_schedule(1000, true).unwrap();
        let x0 = random_latent(&mut rng, [2, 3, 3]);
        let oracle = oracle_denoiser(x0.clone(), &s);
        for t in [0, 1, 250, 500, 998, 999] {
            let z = random_latent(&mut rng, [2, 3, 3]);
            let v = oracle.predict_velocity(&z, t, &()).unwrap();
            assert!(x0_from_v(&z, &v, t, &s).unwrap().max_abs_diff(&x0).unwrap() < 1e-9);
        }
    }

    #[test]
    fn fifty_step_ddim_recovers_x0() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = default_schedule(1000, true).unwrap();
        let x0 = random_latent(&mut rng, [4, 8, 8]);
        let noise = random_latent(&mut rng, [4, 8, 8]);
        let sampler = DdimSampler::new(s.clone(), 50).unwrap();
        let oracle = oracle_denoiser(x0.clone(), &s);
        let out = sampler.sample(&oracle, &(), &noise).unwrap();
        assert!(out.max_abs_diff(&x0).unwrap() < 1e-4);
        assert_eq!(out, sampler.sample(&oracle, &(), &noise).unwrap());
    }

    #[test]
    fn cfg_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = random_latent(&mut rng, [1, 3, 3]);
        let c = random_latent(&mut rng, [1, 3, 3]);
        let g = |scale| GuidanceConfig {
            scale,
            uncond_drop_ratio: 0.1,
        };
        assert_eq!(cfg_combine(&u, &c, &g(1.0)).unwrap(), c);
        assert_eq!(cfg_combine(&u, &c, &g(0.0)).unwrap(), u);
        assert_eq!(cfg_combine(&c, &c, &g(3.7)).unwrap(), c);
        let zero = Latent::zeros(1, 3, 3);
        assert_eq!(cfg_combine(&zero, &c, &g(1.5)).unwrap(), c.map(|x| 1.5 * x));
        assert!(cfg_combine(&u, &c, &g(f64::NAN)).is_err());
    }

    #[test]
    fn min_snr_weights() {
        assert_eq!(min_snr_weight_from_snr(1.0, 5.0), 0.5);
        assert_eq!(min_snr_weight_from_snr(0.0, 5.0), 0.0);
        assert_eq!(min_snr_weight_from_snr(3.0, f64::INFINITY), 0.75);
        let s = default_schedule(1000, true).unwrap();
        assert_eq!(min_snr_weight(999, &s, 5.0).unwrap(), 0.0);
        assert!(min_snr_weight(1000, &s, 5.0).is_err());
    }

    #[test]
    fn min_snr_weight_non_increasing_once_snr_below_gamma() {
        let s = default_schedule(1000, true).unwrap();
        let gamma = 5.0;
        let start = (0..1000).find(|&t| s.snr(t).unwrap() <= gamma).unwrap();
        let w: Vec<f64> = (start..1000).map(|t| min_snr_weight(t, &s, gamma).unwrap()).collect();
        assert!(w.windows(2).all(|p| p[1] <= p[0]));
        // above the clamp the weight grows with t
        assert!(min_snr_weight(0, &s, gamma).unwrap() < min_snr_weight(start, &s, gamma).unwrap());
    }
}
