//! Mean SSIM with an 11x11 Gaussian window (sigma 1.5), reflection padding,
//! and its gradient with respect to the first image.

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;
use crate::numeric::pairwise_sum;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const C1: f64 = 0.01 * 0.01;
pub const C2: f64 = 0.03 * 0.03;

const RADIUS: usize = WINDOW / 2;

/// Similarity in `[-1, 1]` plus `d value / d a` laid out like `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsimValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps() -> [f64; WINDOW] {
    let mut taps = [0.0; WINDOW];
    for (k, t) in taps.iter_mut().enumerate() {
        let x = k as f64 - RADIUS as f64;
        *t = (-x * x / (2.0 * SIGMA * SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Mirror an out-of-range index back inside `[0, n)` without repeating the edge.
#[inline]
pub fn reflect(idx: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = idx;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

struct Blur {
    taps: [f64; WINDOW],
    h: usize,
    w: usize,
}

impl Blur {
    fn forward(&self, plane: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let mut tmp = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (k, t) in self.taps.iter().enumerate() {
                    acc += t * plane[i * w + reflect(j as isize + k as isize - RADIUS as isize, w)];
                }
                tmp[i * w + j] = acc;
            }
        }
        let mut out = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let mut acc = 0.0;
                for (k, t) in self.taps.iter().enumerate() {
                    acc += t * tmp[reflect(i as isize + k as isize - RADIUS as isize, h) * w + j];
                }
                out[i * w + j] = acc;
            }
        }
        out
    }

    fn adjoint(&self, grad: &[f64]) -> Vec<f64> {
        let (h, w) = (self.h, self.w);
        let mut tmp = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let g = grad[i * w + j];
                for (k, t) in self.taps.iter().enumerate() {
                    tmp[reflect(i as isize + k as isize - RADIUS as isize, h) * w + j] += t * g;
                }
            }
        }
        let mut out = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                let g = tmp[i * w + j];
                for (k, t) in self.taps.iter().enumerate() {
                    out[i * w + reflect(j as isize + k as isize - RADIUS as isize, w)] += t * g;
                }
            }
        }
        out
    }
}

fn plane(img: &ImageBuffer, ch: usize) -> Vec<f64> {
    img.data()
        .iter()
        .skip(ch)
        .step_by(img.channels())
        .map(|&v| v as f64)
        .collect()
}

/// Mean SSIM over pixels, averaged over channels.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<SsimValue> {
    a.same_shape(b)?;
    let (h, w, channels) = (a.height(), a.width(), a.channels());
    if h < WINDOW || w < WINDOW {
        return Err(Error::ImageTooSmall {
            height: h,
            width: w,
            window: WINDOW,
        });
    }
    let blur = Blur {
        taps: gaussian_taps(),
        h,
        w,
    };
    let n = (h * w) as f64;
    let mut channel_means = Vec::with_capacity(channels);
    let mut gradient = vec![0.0; a.len()];

    for ch in 0..channels {
        let pa = plane(a, ch);
        let pb = plane(b, ch);
        let mu_a = blur.forward(&pa);
        let mu_b = blur.forward(&pb);
        let e_aa = blur.forward(&pa.iter().map(|v| v * v).collect::<Vec<_>>());
        let e_bb = blur.forward(&pb.iter().map(|v| v * v).collect::<Vec<_>>());
        let e_ab = blur.forward(&pa.iter().zip(&pb).map(|(x, y)| x * y).collect::<Vec<_>>());

        let mut map = vec![0.0; h * w];
        let mut d_mu = vec![0.0; h * w];
        let mut d_eaa = vec![0.0; h * w];
        let mut d_eab = vec![0.0; h * w];
        for p in 0..h * w {
            let (ma, mb) = (mu_a[p], mu_b[p]);
            let var_a = e_aa[p] - ma * ma;
            let var_b = e_bb[p] - mb * mb;
            let cov = e_ab[p] - ma * mb;
            let a1 = 2.0 * ma * mb + C1;
            let a2 = 2.0 * cov + C2;
            let b1 = ma * ma + mb * mb + C1;
            let b2 = var_a + var_b + C2;
            let denom = b1 * b2;
            let s = a1 * a2 / denom;
            map[p] = s;
            d_mu[p] = (2.0 * mb * a2 - 2.0 * mb * a1) / denom - s * (2.0 * ma / b1 - 2.0 * ma / b2);
            d_eaa[p] = -s / b2;
            d_eab[p] = 2.0 * a1 / denom;
        }
        channel_means.push(pairwise_sum(&map) / n);

        let g_mu = blur.adjoint(&d_mu);
        let g_eaa = blur.adjoint(&d_eaa);
        let g_eab = blur.adjoint(&d_eab);
        let scale = 1.0 / (n * channels as f64);
        for p in 0..h * w {
            gradient[p * channels + ch] =
                scale * (g_mu[p] + 2.0 * pa[p] * g_eaa[p] + pb[p] * g_eab[p]);
        }
    }

    Ok(SsimValue {
        value: pairwise_sum(&channel_means) / channels as f64,
        gradient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct per-window evaluation with explicit 2-D weights.
    fn brute_force_ssim(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
        let (h, w, c) = (a.height(), a.width(), a.channels());
        let g1: Vec<f64> = (0..WINDOW)
            .map(|k| {
                let x = k as f64 - 5.0;
                (-x * x / 4.5).exp()
            })
            .collect();
        let norm: f64 = g1.iter().sum::<f64>().powi(2);
        let mut total = 0.0;
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let (mut ma, mut mb, mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for ki in 0..WINDOW {
                        for kj in 0..WINDOW {
                            let wt = g1[ki] * g1[kj] / norm;
                            let ii = reflect(i as isize + ki as isize - 5, h);
                            let jj = reflect(j as isize + kj as isize - 5, w);
                            let x = a.get(ii, jj, ch) as f64;
                            let y = b.get(ii, jj, ch) as f64;
                            ma += wt * x;
                            mb += wt * y;
                            aa += wt * x * x;
                            bb += wt * y * y;
                            ab += wt * x * y;
                        }
                    }
                    let va = aa - ma * ma;
                    let vb = bb - mb * mb;
                    let cov = ab - ma * mb;
                    total += (2.0 * ma * mb + C1) * (2.0 * cov + C2)
                        / ((ma * ma + mb * mb + C1) * (va + vb + C2));
                }
            }
        }
        total / (h * w * c) as f64
    }

    fn random_image(h: usize, w: usize, c: usize, rng: &mut ChaCha8Rng) -> ImageBuffer {
        ImageBuffer::from_fn(h, w, c, |_, _, _| rng.gen_range(0.0..1.0)).unwrap()
    }

    #[test]
    fn identical_images_score_exactly_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_image(16, 20, 3, &mut rng);
        assert_eq!(ssim(&a, &a).unwrap().value, 1.0);
    }

    #[test]
    fn matches_brute_force_window_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = ImageBuffer::from_fn(14, 17, 1, |_, _, _| rng.gen_range(0.0..0.5)).unwrap();
        let a = ImageBuffer::from_clamped(
            14,
            17,
            1,
            b.data().iter().map(|v| v + 0.5).collect(),
        )
        .unwrap();
        let fast = ssim(&a, &b).unwrap().value;
        let slow = brute_force_ssim(&a, &b);
        assert!(fast < 1.0);
        assert!((fast - slow).abs() < 1e-6, "{fast} vs {slow}");

        let c = random_image(12, 13, 3, &mut rng);
        let d = random_image(12, 13, 3, &mut rng);
        assert!((ssim(&c, &d).unwrap().value - brute_force_ssim(&c, &d)).abs() < 1e-6);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = ImageBuffer::from_fn(13, 15, 3, |_, _, _| rng.gen_range(0.05..0.95)).unwrap();
        let b = ImageBuffer::from_fn(13, 15, 3, |_, _, _| rng.gen_range(0.05..0.95)).unwrap();
        let grad = ssim(&a, &b).unwrap().gradient;
        const H: f32 = 1e-4;
        for _ in 0..60 {
            let k = rng.gen_range(0..a.len());
            let (i, j, ch) = (k / 3 / 15, (k / 3) % 15, k % 3);
            let x = a.get(i, j, ch);
            let mut plus = a.clone();
            plus.set(i, j, ch, x + H);
            let mut minus = a.clone();
            minus.set(i, j, ch, x - H);
            let step = plus.get(i, j, ch) as f64 - minus.get(i, j, ch) as f64;
            let fd = (ssim(&plus, &b).unwrap().value - ssim(&minus, &b).unwrap().value) / step;
            let rel = (fd - grad[k]).abs() / fd.abs().max(grad[k].abs()).max(1e-12);
            assert!(rel < 1e-4, "k={k} fd={fd} analytic={}", grad[k]);
        }
    }

    #[test]
    fn rejects_small_and_mismatched() {
        let a = ImageBuffer::zeros(10, 20, 1);
        assert!(matches!(ssim(&a, &a), Err(Error::ImageTooSmall { .. })));
        let b = ImageBuffer::zeros(12, 12, 1);
        let c = ImageBuffer::zeros(12, 12, 3);
        assert!(matches!(ssim(&b, &c), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-4, 5), 4);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(8, 5), 0);
        assert_eq!(reflect(2, 5), 2);
    }
}
