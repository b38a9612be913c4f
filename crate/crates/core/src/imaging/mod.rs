//! Image, disparity, and mask containers plus the warping operators.

mod io;
mod warp;

pub use io::{
    decode_image, decode_disparity, decode_mask, encode_mask_pgm, encode_pfm, encode_ppm,
    encode_stsp, decode_stsp, read_disparity, read_image, read_mask, write_disparity, write_image,
    write_mask, RawTensor,
};
pub use warp::{
    backward_warp, forward_warp, lr_consistency_mask, WarpDirection, WarpPlan,
    DEFAULT_LR_THRESHOLD,
};

use crate::error::{Error, Result};

/// Row-major, channel-interleaved image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ImageBuffer {
    /// Fails on non-finite values or values outside `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        Self::check_layout(height, width, channels, data.len())?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidRange(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Clamps into `[0, 1]`; non-finite values become 0.
    pub fn from_clamped(height: usize, width: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        Self::check_layout(height, width, channels, data.len())?;
        for v in &mut data {
            *v = if v.is_finite() { v.clamp(0.0, 1.0) } else { 0.0 };
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    /// Build from a per-pixel function returning one value per channel.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for i in 0..height {
            for j in 0..width {
                for c in 0..channels {
                    data.push(f(i, j, c));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    fn check_layout(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
        if channels != 1 && channels != 3 {
            return Err(Error::ShapeMismatch(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if height * width * channels != len {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} needs {} values, got {len}",
                height * width * channels
            )));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    /// Overwrite one value, clamping into `[0, 1]`.
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f32) {
        let idx = (row * self.width + col) * self.channels + ch;
        self.data[idx] = if value.is_finite() { value.clamp(0.0, 1.0) } else { 0.0 };
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    /// Rec. 601 luminance for RGB, identity for grayscale.
    pub fn luminance(&self) -> Vec<f32> {
        if self.channels == 1 {
            return self.data.clone();
        }
        self.data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        let mut out = self.clone();
        let (w, c) = (self.width, self.channels);
        for i in 0..self.height {
            for j in 0..w {
                let src = (i * w + (w - 1 - j)) * c;
                let dst = (i * w + j) * c;
                out.data[dst..dst + c].copy_from_slice(&self.data[src..src + c]);
            }
        }
        out
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> Result<()> {
        if self.height != other.height || self.width != other.width || self.channels != other.channels {
            return Err(Error::ShapeMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )));
        }
        Ok(())
    }
}

/// Horizontal disparities in pixels, NaN marks invalid pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DisparityMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} disparity needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                data.push(f(i, j));
            }
        }
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// `None` for NaN/infinite entries.
    #[inline]
    pub fn valid(&self, row: usize, col: usize) -> Option<f32> {
        let d = self.get(row, col);
        d.is_finite().then_some(d)
    }

    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    pub fn valid_fraction(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().filter(|d| d.is_finite()).count() as f64 / self.data.len() as f64
    }

    pub fn scaled(&self, factor: f32) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|d| d * factor).collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        Self::from_fn(self.height, w, |i, j| self.get(i, w - 1 - j))
    }

    /// Set entries to NaN wherever `mask` is false.
    pub fn masked(&self, mask: &ValidityMask) -> Result<Self> {
        check_dims(self.height, self.width, mask.height(), mask.width())?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(mask.data())
                .map(|(&d, &m)| if m { d } else { f32::NAN })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if height * width != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width} mask needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&m| m).count()
    }

    pub fn and(&self, other: &ValidityMask) -> Result<Self> {
        check_dims(self.height, self.width, other.height, other.width)?;
        Ok(Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect(),
        })
    }

    /// Every true pixel of `self` is also true in `other`.
    pub fn is_subset_of(&self, other: &ValidityMask) -> bool {
        self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| !*a || *b)
    }

    pub fn flip_horizontal(&self) -> Self {
        let w = self.width;
        let mut data = Vec::with_capacity(self.data.len());
        for i in 0..self.height {
            for j in 0..w {
                data.push(self.get(i, w - 1 - j));
            }
        }
        Self {
            height: self.height,
            width: w,
            data,
        }
    }
}

pub(crate) fn check_dims(h1: usize, w1: usize, h2: usize, w2: usize) -> Result<()> {
    if h1 != h2 || w1 != w2 {
        return Err(Error::ShapeMismatch(format!("{h1}x{w1} vs {h2}x{w2}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range_and_bad_layout() {
        assert!(ImageBuffer::new(1, 2, 1, vec![0.0, 1.5]).is_err());
        assert!(ImageBuffer::new(1, 2, 1, vec![0.0, f32::NAN]).is_err());
        assert!(ImageBuffer::new(1, 2, 2, vec![0.0; 4]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        let img = ImageBuffer::from_clamped(1, 3, 1, vec![-1.0, 2.0, f32::NAN]).unwrap();
        assert_eq!(img.data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn flips_are_involutions() {
        let img = ImageBuffer::from_fn(3, 4, 3, |i, j, c| (i * 12 + j * 3 + c) as f32 / 40.0).unwrap();
        assert_eq!(img.flip_horizontal().flip_horizontal(), img);
        assert_eq!(img.flip_horizontal().get(1, 0, 2), img.get(1, 3, 2));
        let d = DisparityMap::from_fn(2, 5, |i, j| (i * 5 + j) as f32);
        assert_eq!(d.flip_horizontal().get(1, 1), 8.0);
    }

    #[test]
    fn disparity_masking() {
        let d = DisparityMap::filled(1, 3, 2.0);
        let m = ValidityMask::new(1, 3, vec![true, false, true]).unwrap();
        let out = d.masked(&m).unwrap();
        assert!(out.get(0, 1).is_nan());
        assert!((out.valid_fraction() - 2.0 / 3.0).abs() < 1e-12);
        assert!(d.masked(&ValidityMask::filled(2, 3, true)).is_err());
    }
}
