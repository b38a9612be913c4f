use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

/// Channel-major `(C, H, W)` buffer of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Latent {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Latent {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels * height * width != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "latent {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_fn(channels: usize, height: usize, width: usize, mut f: impl FnMut() -> f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: (0..channels * height * width).map(|_| f()).collect(),
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_shape(&self, other: &Latent) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(format!(
                "latent {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Caller guarantees equal shapes.
    pub(crate) fn zip_map(&self, other: &Latent, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &Latent) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Planar copy of an image, values unchanged.
    pub fn from_image(img: &ImageBuffer) -> Self {
        let (h, w, c) = (img.height(), img.width(), img.channels());
        let mut data = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                data[ch * h * w + p] = img.data()[p * c + ch] as f64;
            }
        }
        Self {
            channels: c,
            height: h,
            width: w,
            data,
        }
    }

    /// Inverse of [`Latent::from_image`], clamping into `[0, 1]`.
    pub fn to_image(&self) -> Result<ImageBuffer> {
        let (c, h, w) = (self.channels, self.height, self.width);
        let mut data = vec![0.0f32; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                data[p * c + ch] = self.data[ch * h * w + p] as f32;
            }
        }
        ImageBuffer::from_clamped(h, w, c, data)
    }
}
