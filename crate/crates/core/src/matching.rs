//! Semi-global block matching: 5x5 census + Hamming cost, block aggregation,
//! multi-path smoothness aggregation, winner-take-all with subpixel
//! refinement, uniqueness and left-right filtering.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{lr_consistency_mask, DisparityMap, ImageBuffer};

const CENSUS_RADIUS: isize = 2;
/// Bits in a 5x5 census descriptor (center excluded).
pub const CENSUS_BITS: u16 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgbmParams {
    pub min_disparity: i32,
    pub num_disparities: usize,
    pub block_size: usize,
    pub p1: u16,
    pub p2: u16,
    pub num_paths: usize,
    /// Percent margin the best cost must win by.
    pub uniqueness_ratio: u32,
    pub lr_threshold: f32,
}

impl Default for SgbmParams {
    fn default() -> Self {
        let block_size = 5;
        let area = (block_size * block_size) as u16;
        Self {
            min_disparity: 0,
            num_disparities: 128,
            block_size,
            p1: 8 * area,
            p2: 32 * area,
            num_paths: 8,
            uniqueness_ratio: 10,
            lr_threshold: 1.0,
        }
    }
}

impl SgbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_disparities == 0 || !self.num_disparities.is_multiple_of(16) {
            return Err(Error::BadParams(format!(
                "num_disparities must be a positive multiple of 16, got {}",
                self.num_disparities
            )));
        }
        if self.block_size < 3 || self.block_size.is_multiple_of(2) {
            return Err(Error::BadParams(format!(
                "block_size must be odd and >= 3, got {}",
                self.block_size
            )));
        }
        if !(self.p2 > self.p1 && self.p1 > 0) {
            return Err(Error::BadParams(format!(
                "need p2 > p1 > 0, got p1={} p2={}",
                self.p1, self.p2
            )));
        }
        if self.num_paths != 4 && self.num_paths != 8 {
            return Err(Error::BadParams(format!(
                "num_paths must be 4 or 8, got {}",
                self.num_paths
            )));
        }
        if self.uniqueness_ratio >= 100 {
            return Err(Error::BadParams("uniqueness_ratio must be below 100".into()));
        }
        if !(self.lr_threshold >= 0.0) {
            return Err(Error::BadParams("lr_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// `height × width × num_disparities` costs, disparity fastest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostVolume {
    pub height: usize,
    pub width: usize,
    pub num_disparities: usize,
    pub min_disparity: i32,
    data: Vec<u16>,
}

impl CostVolume {
    #[inline]
    pub fn at(&self, row: usize, col: usize, k: usize) -> u16 {
        self.data[(row * self.width + col) * self.num_disparities + k]
    }

    /// Costs of every disparity at one pixel.
    pub fn costs(&self, row: usize, col: usize) -> &[u16] {
        let base = (row * self.width + col) * self.num_disparities;
        &self.data[base..base + self.num_disparities]
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    fn with_data(&self, data: Vec<u16>) -> Self {
        Self {
            height: self.height,
            width: self.width,
            num_disparities: self.num_disparities,
            min_disparity: self.min_disparity,
            data,
        }
    }
}

fn census(gray: &[f32], h: usize, w: usize) -> Vec<u32> {
    let at = |i: isize, j: isize| {
        let i = i.clamp(0, h as isize - 1) as usize;
        let j = j.clamp(0, w as isize - 1) as usize;
        gray[i * w + j]
    };
    (0..h * w)
        .into_par_iter()
        .map(|p| {
            let (i, j) = ((p / w) as isize, (p % w) as isize);
            let center = at(i, j);
            let mut bits = 0u32;
            for di in -CENSUS_RADIUS..=CENSUS_RADIUS {
                for dj in -CENSUS_RADIUS..=CENSUS_RADIUS {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    bits = (bits << 1) | u32::from(at(i + di, j + dj) < center);
                }
            }
            bits
        })
        .collect()
}

/// Census-Hamming cost summed over `block_size × block_size` windows.
/// Disparities whose match falls outside the right image get the saturated
/// per-pixel cost before block summation.
pub fn matching_cost(left: &ImageBuffer, right: &ImageBuffer, p: &SgbmParams) -> Result<CostVolume> {
    p.validate()?;
    left.same_shape(right)?;
    let (h, w, nd) = (left.height(), left.width(), p.num_disparities);
    let cl = census(&left.luminance(), h, w);
    let cr = census(&right.luminance(), h, w);

    let mut raw = vec![0u16; h * w * nd];
    raw.par_chunks_mut(w * nd).enumerate().for_each(|(i, row)| {
        for j in 0..w {
            for k in 0..nd {
                let x = j as i64 - (p.min_disparity as i64 + k as i64);
                row[j * nd + k] = if x < 0 || x >= w as i64 {
                    CENSUS_BITS
                } else {
                    (cl[i * w + j] ^ cr[i * w + x as usize]).count_ones() as u16
                };
            }
        }
    });

    let r = (p.block_size / 2) as isize;
    // horizontal box sum, clamped borders
    let mut horiz = vec![0u16; h * w * nd];
    horiz.par_chunks_mut(w * nd).enumerate().for_each(|(i, row)| {
        for j in 0..w as isize {
            for dj in -r..=r {
                let jj = (j + dj).clamp(0, w as isize - 1) as usize;
                let src = &raw[(i * w + jj) * nd..(i * w + jj + 1) * nd];
                let dst = &mut row[j as usize * nd..(j as usize + 1) * nd];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d = d.saturating_add(*s);
                }
            }
        }
    });
    let mut data = vec![0u16; h * w * nd];
    data.par_chunks_mut(w * nd).enumerate().for_each(|(i, row)| {
        for di in -r..=r {
            let ii = (i as isize + di).clamp(0, h as isize - 1) as usize;
            let src = &horiz[ii * w * nd..(ii + 1) * w * nd];
            for (d, s) in row.iter_mut().zip(src) {
                *d = d.saturating_add(*s);
            }
        }
    });
    Ok(CostVolume {
        height: h,
        width: w,
        num_disparities: nd,
        min_disparity: p.min_disparity,
        data,
    })
}

/// Scan directions `(dx, dy)`; the first four are used for 4-path runs.
const PATHS: [(isize, isize); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

/// One step of the path recurrence for a single pixel.
#[inline]
fn path_step(cost: &[u16], prev: &[u16], out: &mut [u16], p1: u32, p2: u32) {
    let nd = cost.len();
    let prev_min = *prev.iter().min().unwrap() as u32;
    for k in 0..nd {
        let mut best = prev[k] as u32;
        if k > 0 {
            best = best.min(prev[k - 1] as u32 + p1);
        }
        if k + 1 < nd {
            best = best.min(prev[k + 1] as u32 + p1);
        }
        best = best.min(prev_min + p2);
        let v = cost[k] as u32 + best - prev_min;
        out[k] = v.min(u16::MAX as u32) as u16;
    }
}

fn aggregate_direction(cv: &CostVolume, dx: isize, dy: isize, p1: u32, p2: u32) -> Vec<u16> {
    let (h, w, nd) = (cv.height, cv.width, cv.num_disparities);
    let mut out = vec![0u16; h * w * nd];
    let col_order: Vec<usize> = if dx < 0 { (0..w).rev().collect() } else { (0..w).collect() };

    if dy == 0 {
        out.par_chunks_mut(w * nd).enumerate().for_each(|(i, row)| {
            let mut prev: Option<usize> = None;
            for &j in &col_order {
                let cost = cv.costs(i, j);
                match prev {
                    None => row[j * nd..(j + 1) * nd].copy_from_slice(cost),
                    Some(pj) => {
                        let (a, b) = if pj < j {
                            let (lo, hi) = row.split_at_mut(j * nd);
                            (&lo[pj * nd..(pj + 1) * nd], &mut hi[..nd])
                        } else {
                            let (lo, hi) = row.split_at_mut(pj * nd);
                            (&hi[..nd], &mut lo[j * nd..(j + 1) * nd])
                        };
                        path_step(cost, a, b, p1, p2);
                    }
                }
                prev = Some(j);
            }
        });
        return out;
    }

    let row_order: Vec<usize> = if dy < 0 { (0..h).rev().collect() } else { (0..h).collect() };
    let mut prev_row: Option<Vec<u16>> = None;
    for &i in &row_order {
        let mut cur = vec![0u16; w * nd];
        cur.par_chunks_mut(nd).enumerate().for_each(|(j, px)| {
            let cost = cv.costs(i, j);
            let pj = j as isize - dx;
            match &prev_row {
                Some(prev) if pj >= 0 && pj < w as isize => {
                    let pj = pj as usize;
                    path_step(cost, &prev[pj * nd..(pj + 1) * nd], px, p1, p2);
                }
                _ => px.copy_from_slice(cost),
            }
        });
        out[i * w * nd..(i + 1) * w * nd].copy_from_slice(&cur);
        prev_row = Some(cur);
    }
    out
}

/// Sum of path costs `L_r` over `num_paths` directions, 16-bit saturating.
pub fn aggregate_paths(cv: &CostVolume, p: &SgbmParams) -> Result<CostVolume> {
    p.validate()?;
    aggregate_with(cv, &PATHS[..p.num_paths], p.p1 as u32, p.p2 as u32)
}

fn aggregate_with(cv: &CostVolume, paths: &[(isize, isize)], p1: u32, p2: u32) -> Result<CostVolume> {
    let mut total = vec![0u16; cv.data.len()];
    for &(dx, dy) in paths {
        let lr = aggregate_direction(cv, dx, dy, p1, p2);
        total.par_iter_mut().zip(lr.par_iter()).for_each(|(t, l)| *t = t.saturating_add(*l));
    }
    Ok(cv.with_data(total))
}

/// Single-direction aggregation with explicit penalties (zero allowed);
/// exposed for tests and diagnostics.
pub fn aggregate_single_path(cv: &CostVolume, dx: isize, dy: isize, p1: u16, p2: u16) -> CostVolume {
    cv.with_data(aggregate_direction(cv, dx, dy, p1 as u32, p2 as u32))
}

/// Offset in `(-0.5, 0.5)` of the equiangular line fit through three costs
/// around a minimum.
#[inline]
fn equiangular_offset(prev: f64, best: f64, next: f64) -> f64 {
    let slope = (prev - best).max(next - best);
    if slope <= 0.0 {
        return 0.0;
    }
    0.5 * (prev - next) / slope
}

/// Winner-take-all with subpixel refinement and uniqueness filtering.
///
/// Ties go to the smaller disparity and are not refined. A pixel is rejected when a disparity
/// more than one step from the winner costs no more than
/// `best * 100 / (100 - uniqueness_ratio)`.
pub fn extract_disparity(cv: &CostVolume, p: &SgbmParams) -> DisparityMap {
    let (h, w, nd) = (cv.height, cv.width, cv.num_disparities);
    let ratio = p.uniqueness_ratio.min(99) as u64;
    let min_d = cv.min_disparity as f64;
    let data: Vec<f32> = (0..h * w)
        .into_par_iter()
        .map(|px| {
            let costs = cv.costs(px / w, px % w);
            let (best_k, best) = costs
                .iter()
                .enumerate()
                .fold((0, u16::MAX), |acc, (k, &c)| if c < acc.1 { (k, c) } else { acc });
            let unique = costs.iter().enumerate().all(|(k, &c)| {
                k.abs_diff(best_k) <= 1 || (c as u64) * (100 - ratio) > (best as u64) * 100
            });
            if !unique {
                return f32::NAN;
            }
            let mut d = best_k as f64;
            // only strict local minima are refined, so an adjacent tie stays
            // on the smaller disparity
            if best_k > 0 && best_k + 1 < nd && costs[best_k - 1] > best && costs[best_k + 1] > best {
                d += equiangular_offset(
                    costs[best_k - 1] as f64,
                    best as f64,
                    costs[best_k + 1] as f64,
                );
            }
            let d = min_d + d;
            if d < min_d || d >= min_d + nd as f64 {
                return f32::NAN;
            }
            d as f32
        })
        .collect();
    DisparityMap::new(h, w, data).expect("dimensions come from the cost volume")
}

/// True where the data term cannot discriminate: every disparity whose
/// match lies inside the image has the same raw cost.
///
/// Saturated out-of-range costs along the left border bias the path sums
/// toward small disparities, and on flat interiors that bias survives
/// aggregation, so textureless pixels are detected on the raw volume.
pub fn flat_cost_mask(cv: &CostVolume) -> Vec<bool> {
    let (w, nd) = (cv.width, cv.num_disparities);
    (0..cv.height * w)
        .into_par_iter()
        .map(|px| {
            let j = (px % w) as i64;
            let costs = cv.costs(px / w, px % w);
            let mut in_range = (0..nd)
                .filter(|&k| j - (cv.min_disparity as i64 + k as i64) >= 0)
                .map(|k| costs[k]);
            match in_range.next() {
                None => true,
                Some(first) => in_range.all(|c| c == first),
            }
        })
        .collect()
}

/// Cost, aggregation and extraction for a left-referenced map, without
/// left-right filtering. Pixels with a flat raw cost are invalid.
pub fn raw_disparity(left: &ImageBuffer, right: &ImageBuffer, p: &SgbmParams) -> Result<DisparityMap> {
    let cv = matching_cost(left, right, p)?;
    let flat = flat_cost_mask(&cv);
    let agg = aggregate_paths(&cv, p)?;
    let mut d = extract_disparity(&agg, p);
    let w = d.width();
    for (px, &f) in flat.iter().enumerate() {
        if f {
            d.set(px / w, px % w, f32::NAN);
        }
    }
    Ok(d)
}

/// Left- and right-referenced disparity maps, each filtered by the
/// left-right consistency check.
pub fn sgbm(left: &ImageBuffer, right: &ImageBuffer, p: &SgbmParams) -> Result<(DisparityMap, DisparityMap)> {
    p.validate()?;
    left.same_shape(right)?;
    let dl = raw_disparity(left, right, p)?;
    // right-referenced matching is left-referenced matching on mirrored views
    let dr_flipped = raw_disparity(&right.flip_horizontal(), &left.flip_horizontal(), p)?;
    let dr = dr_flipped.flip_horizontal();
    let mask_l = lr_consistency_mask(&dl, &dr, p.lr_threshold)?;
    let mask_r = lr_consistency_mask(&dr_flipped, &dl.flip_horizontal(), p.lr_threshold)?.flip_horizontal();
    Ok((dl.masked(&mask_l)?, dr.masked(&mask_r)?))
}
