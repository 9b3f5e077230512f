//! Floating-point RGB images and PNG I/O.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Row-major RGB image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::InvalidInput(format!(
                "image data has {} values, expected {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, color: [f64; 3]) -> Self {
        RgbImage {
            width,
            height,
            data: (0..width * height).flat_map(|_| color).collect(),
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y));
            }
        }
        RgbImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, c: [f64; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    pub fn max_abs_diff(&self, other: &RgbImage) -> f64 {
        assert_eq!((self.width, self.height), (other.width, other.height));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Quantize to 8 bits (round to nearest, clamped).
    pub fn to_rgb8(&self) -> image::RgbImage {
        let bytes = self.data.iter().map(|v| quantize8(*v)).collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer size matches")
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Self {
        RgbImage {
            width: img.width() as usize,
            height: img.height() as usize,
            data: img.as_raw().iter().map(|b| *b as f64 / 255.0).collect(),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_rgb8(&img.to_rgb8()))
    }

    /// Place images side by side in a row.
    pub fn hstack(images: &[RgbImage]) -> Result<Self> {
        let Some(first) = images.first() else {
            return Err(Error::InvalidInput("nothing to stack".into()));
        };
        if images.iter().any(|i| i.height != first.height) {
            return Err(Error::InvalidInput("images differ in height".into()));
        }
        let width: usize = images.iter().map(|i| i.width).sum();
        let mut out = RgbImage::filled(width, first.height, [0.0; 3]);
        let mut x0 = 0;
        for img in images {
            for y in 0..img.height {
                for x in 0..img.width {
                    out.set(x0 + x, y, img.get(x, y));
                }
            }
            x0 += img.width;
        }
        Ok(out)
    }

    /// Arrange images on a grid with `cols` columns (row-major).
    pub fn grid(images: &[RgbImage], cols: usize) -> Result<Self> {
        if cols == 0 {
            return Err(Error::InvalidInput("grid needs at least one column".into()));
        }
        let rows: Vec<RgbImage> = images
            .chunks(cols)
            .map(|chunk| {
                let mut row = chunk.to_vec();
                while row.len() < cols {
                    row.push(RgbImage::filled(chunk[0].width, chunk[0].height, [0.0; 3]));
                }
                Self::hstack(&row)
            })
            .collect::<Result<_>>()?;
        let width = rows[0].width;
        let mut data = Vec::new();
        for r in &rows {
            if r.width != width {
                return Err(Error::InvalidInput("images differ in width".into()));
            }
            data.extend_from_slice(&r.data);
        }
        let height = rows.iter().map(|r| r.height).sum();
        RgbImage::new(width, height, data)
    }
}

pub fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Peak signal-to-noise ratio in dB over pixels where `mask` is true (all if `None`).
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height));
    let mut se = 0.0;
    let mut count = 0usize;
    for p in 0..a.width * a.height {
        if mask.is_some_and(|m| !m[p]) {
            continue;
        }
        for k in 0..3 {
            let d = a.data[3 * p + k] - b.data[3 * p + k];
            se += d * d;
        }
        count += 3;
    }
    if count == 0 {
        return f64::NAN;
    }
    let mse = se / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Sidecar written next to a 16-bit depth PNG: `depth = value / 65535 * max_depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub max_depth: f64,
    pub width: usize,
    pub height: usize,
}

/// Write depth as a 16-bit grayscale PNG plus a `.json` sidecar with the scale.
pub fn save_depth_png(path: &Path, depth: &[f64], width: usize, height: usize) -> Result<DepthSidecar> {
    if depth.len() != width * height {
        return Err(Error::InvalidInput("depth map size mismatch".into()));
    }
    let max_depth = depth.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    let scale = if max_depth > 0.0 { 65535.0 / max_depth } else { 0.0 };
    let pixels: Vec<u16> = depth
        .iter()
        .map(|d| (d.max(0.0) * scale).round().min(65535.0) as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
        width as u32,
        height as u32,
        pixels,
    )
    .expect("buffer size matches");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
    let sidecar = DepthSidecar {
        max_depth,
        width,
        height,
    };
    let json_path = path.with_extension("json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| Error::io(&json_path, e))?;
    Ok(sidecar)
}
