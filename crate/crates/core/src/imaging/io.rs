//! PPM/PGM, PFM and the raw `STSP` tensor format.
//!
//! `STSP` layout (all little-endian): magic `b"STSP"`, `u32` version = 1,
//! `u32` dims = 3, three `u32` extents `(C, H, W)`, then `C*H*W` `f32`
//! values in channel-major order.

use std::fs;
use std::path::Path;

use super::{DisparityMap, ImageBuffer, ValidityMask};
use crate::error::{Error, Result};

const STSP_MAGIC: &[u8; 4] = b"STSP";
const STSP_VERSION: u32 = 1;

/// A decoded `STSP` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTensor {
    pub shape: [usize; 3],
    pub data: Vec<f32>,
}

pub fn encode_stsp(shape: [usize; 3], data: &[f32]) -> Result<Vec<u8>> {
    if shape.iter().product::<usize>() != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "tensor shape {shape:?} needs {} values, got {}",
            shape.iter().product::<usize>(),
            data.len()
        )));
    }
    let mut out = Vec::with_capacity(24 + data.len() * 4);
    out.extend_from_slice(STSP_MAGIC);
    out.extend_from_slice(&STSP_VERSION.to_le_bytes());
    out.extend_from_slice(&3u32.to_le_bytes());
    for &d in &shape {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_stsp(bytes: &[u8]) -> Result<RawTensor> {
    if bytes.len() < 24 || &bytes[..4] != STSP_MAGIC {
        return Err(Error::Format("not an STSP tensor".into()));
    }
    let word = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap());
    if word(0) != STSP_VERSION {
        return Err(Error::Format(format!("unsupported STSP version {}", word(0))));
    }
    if word(1) != 3 {
        return Err(Error::Format(format!("expected 3 dims, got {}", word(1))));
    }
    let shape = [word(2) as usize, word(3) as usize, word(4) as usize];
    let n: usize = shape.iter().product();
    let payload = &bytes[24..];
    if payload.len() != n * 4 {
        return Err(Error::Format(format!(
            "STSP payload has {} bytes, expected {}",
            payload.len(),
            n * 4
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(RawTensor { shape, data })
}

/// Whitespace/comment-aware header tokenizer shared by the netpbm formats.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn token(&mut self) -> Result<&'a str> {
        loop {
            match self.bytes.get(self.pos) {
                Some(b'#') => {
                    while let Some(&b) = self.bytes.get(self.pos) {
                        self.pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(b) if b.is_ascii_whitespace() => self.pos += 1,
                Some(_) => break,
                None => return Err(Error::Format("truncated header".into())),
            }
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Format("non-ASCII header".into()))
    }

    fn number<T: std::str::FromStr>(&mut self) -> Result<T> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Format(format!("bad header field {tok:?}")))
    }

    /// Consume the single whitespace byte that ends the header.
    fn payload(mut self) -> Result<&'a [u8]> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => {
                self.pos += 1;
                Ok(&self.bytes[self.pos..])
            }
            _ => Err(Error::Format("missing header terminator".into())),
        }
    }
}

fn decode_netpbm(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let mut hdr = Header::new(bytes);
    let channels = match hdr.token()? {
        "P6" => 3,
        "P5" => 1,
        other => return Err(Error::Format(format!("unsupported netpbm magic {other:?}"))),
    };
    let width: usize = hdr.number()?;
    let height: usize = hdr.number()?;
    let maxval: u32 = hdr.number()?;
    if maxval != 255 {
        return Err(Error::Format(format!("only 8-bit netpbm supported, maxval {maxval}")));
    }
    let payload = hdr.payload()?;
    let n = width * height * channels;
    if payload.len() < n {
        return Err(Error::Format(format!(
            "netpbm payload has {} bytes, expected {n}",
            payload.len()
        )));
    }
    Ok((height, width, channels, &payload[..n]))
}

/// Quantize to 8 bits: `round(v * 255)`.
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// P6 for RGB, P5 for grayscale.
pub fn encode_ppm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels() == 3 { "P6" } else { "P5" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.data().iter().map(|&v| quantize(v)));
    out
}

pub fn encode_pfm(disp: &DisparityMap) -> Vec<u8> {
    let (h, w) = (disp.height(), disp.width());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    // PFM stores scanlines bottom to top.
    for i in (0..h).rev() {
        for j in 0..w {
            out.extend_from_slice(&disp.get(i, j).to_le_bytes());
        }
    }
    out
}

fn decode_pfm(bytes: &[u8]) -> Result<DisparityMap> {
    let mut hdr = Header::new(bytes);
    match hdr.token()? {
        "Pf" => {}
        "PF" => return Err(Error::Format("colour PFM is not a disparity map".into())),
        other => return Err(Error::Format(format!("unsupported PFM magic {other:?}"))),
    }
    let width: usize = hdr.number()?;
    let height: usize = hdr.number()?;
    let scale: f32 = hdr.number()?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Format(format!("bad PFM scale {scale}")));
    }
    let little = scale < 0.0;
    let payload = hdr.payload()?;
    let n = width * height;
    if payload.len() < n * 4 {
        return Err(Error::Format(format!(
            "PFM payload has {} bytes, expected {}",
            payload.len(),
            n * 4
        )));
    }
    let mut data = vec![0.0f32; n];
    for (k, chunk) in payload[..n * 4].chunks_exact(4).enumerate() {
        let raw: [u8; 4] = chunk.try_into().unwrap();
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (k / width, k % width);
        data[(height - 1 - file_row) * width + col] = v;
    }
    DisparityMap::new(height, width, data)
}

pub fn encode_mask_pgm(mask: &ValidityMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend(mask.data().iter().map(|&m| if m { 255u8 } else { 0 }));
    out
}

pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    if bytes.starts_with(STSP_MAGIC) {
        let t = decode_stsp(bytes)?;
        let [c, h, w] = t.shape;
        let plane = h * w;
        let mut data = Vec::with_capacity(t.data.len());
        for p in 0..plane {
            for ch in 0..c {
                data.push(t.data[ch * plane + p]);
            }
        }
        return ImageBuffer::new(h, w, c, data);
    }
    let (h, w, c, payload) = decode_netpbm(bytes)?;
    ImageBuffer::new(h, w, c, payload.iter().map(|&b| b as f32 / 255.0).collect())
}

pub fn decode_disparity(bytes: &[u8]) -> Result<DisparityMap> {
    if bytes.starts_with(STSP_MAGIC) {
        let t = decode_stsp(bytes)?;
        if t.shape[0] != 1 {
            return Err(Error::ShapeMismatch(format!(
                "disparity tensor needs 1 channel, got {}",
                t.shape[0]
            )));
        }
        return DisparityMap::new(t.shape[1], t.shape[2], t.data);
    }
    decode_pfm(bytes)
}

/// Nonzero (P5) or finite nonzero (STSP) entries are valid.
pub fn decode_mask(bytes: &[u8]) -> Result<ValidityMask> {
    if bytes.starts_with(STSP_MAGIC) {
        let t = decode_stsp(bytes)?;
        if t.shape[0] != 1 {
            return Err(Error::ShapeMismatch("mask tensor needs 1 channel".into()));
        }
        let data = t.data.iter().map(|v| v.is_finite() && *v != 0.0).collect();
        return ValidityMask::new(t.shape[1], t.shape[2], data);
    }
    let (h, w, c, payload) = decode_netpbm(bytes)?;
    if c != 1 {
        return Err(Error::Format("mask must be a grayscale PGM".into()));
    }
    ValidityMask::new(h, w, payload.iter().map(|&b| b != 0).collect())
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    decode_image(&fs::read(path)?)
}

pub fn read_disparity(path: impl AsRef<Path>) -> Result<DisparityMap> {
    decode_disparity(&fs::read(path)?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<ValidityMask> {
    decode_mask(&fs::read(path)?)
}

/// Writes STSP when the extension is `.stsp`, netpbm otherwise.
pub fn write_image(path: impl AsRef<Path>, img: &ImageBuffer) -> Result<()> {
    let path = path.as_ref();
    let bytes = if has_stsp_extension(path) {
        let (h, w, c) = (img.height(), img.width(), img.channels());
        let mut planar = vec![0.0f32; img.len()];
        for p in 0..h * w {
            for ch in 0..c {
                planar[ch * h * w + p] = img.data()[p * c + ch];
            }
        }
        encode_stsp([c, h, w], &planar)?
    } else {
        encode_ppm(img)
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes STSP when the extension is `.stsp`, PFM otherwise.
pub fn write_disparity(path: impl AsRef<Path>, disp: &DisparityMap) -> Result<()> {
    let path = path.as_ref();
    let bytes = if has_stsp_extension(path) {
        encode_stsp([1, disp.height(), disp.width()], disp.data())?
    } else {
        encode_pfm(disp)
    };
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &ValidityMask) -> Result<()> {
    fs::write(path, encode_mask_pgm(mask))?;
    Ok(())
}

fn has_stsp_extension(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("stsp"))
}
