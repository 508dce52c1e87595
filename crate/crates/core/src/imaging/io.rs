//! PNG / PGM reading and writing.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Luma, Rgb, RgbImage};

use super::{BinaryMask, ImageBuffer};
use crate::error::{Error, Result};

fn image_err(path: &Path, err: image::ImageError) -> Error {
    match err {
        image::ImageError::IoError(e) => Error::io(path, e),
        other => Error::format(path, other.to_string()),
    }
}

fn format_for(path: &Path) -> ImageFormat {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(ext) if ext == "pgm" || ext == "ppm" || ext == "pnm" => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    }
}

/// Read an 8/16-bit gray or colour image into `[0, 1]` samples. Alpha is
/// dropped.
pub fn read_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = img.color();
    if color.has_color() {
        let rgb = img.to_rgb32f();
        ImageBuffer::new(w, h, 3, rgb.into_raw().into_iter().map(f64::from).collect())
    } else {
        let data = match img {
            DynamicImage::ImageLuma16(_) | DynamicImage::ImageLumaA16(_) => img
                .to_luma16()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect(),
            _ => img
                .to_luma8()
                .into_raw()
                .into_iter()
                .map(|v| v as f64 / 255.0)
                .collect(),
        };
        ImageBuffer::new(w, h, 1, data)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Write samples clamped to `[0, 1]` and linearly mapped onto `0..=255`.
/// The container follows the extension (`.pgm`/`.ppm` or PNG).
pub fn write_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let dynamic = if img.channels() == 1 {
        DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("sized buffer"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized buffer"))
    };
    dynamic
        .save_with_format(path, format_for(path))
        .map_err(|e| image_err(path, e))
}

/// Masks are stored as single-channel `{0, 255}` images.
pub fn write_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut img = GrayImage::new(mask.width() as u32, mask.height() as u32);
    for (x, y) in mask.pixels() {
        img.put_pixel(x as u32, y as u32, Luma([255]));
    }
    img.save_with_format(path, format_for(path))
        .map_err(|e| image_err(path, e))
}

/// Any sample above mid-gray reads as set.
pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = read_image(path)?.to_luminance();
    let (w, h) = img.dims();
    BinaryMask::from_bits(w, h, img.data().iter().map(|&v| v > 0.5).collect())
}

/// RGB canvas used for overlays.
pub struct RgbCanvas {
    img: RgbImage,
}

impl RgbCanvas {
    pub fn from_gray(img: &ImageBuffer) -> Self {
        let lum = img.to_luminance();
        let mut canvas = RgbImage::new(lum.width() as u32, lum.height() as u32);
        for (x, y, px) in canvas.enumerate_pixels_mut() {
            let v = to_u8(lum.get(x as usize, y as usize));
            *px = Rgb([v, v, v]);
        }
        Self { img: canvas }
    }

    /// Alpha-blend `color` over the set pixels of `mask`.
    pub fn blend_mask(&mut self, mask: &BinaryMask, color: [u8; 3], alpha: f64) {
        for (x, y) in mask.pixels() {
            if let Some(px) = self.img.get_pixel_mut_checked(x as u32, y as u32) {
                for c in 0..3 {
                    let v = px.0[c] as f64 * (1.0 - alpha) + color[c] as f64 * alpha;
                    px.0[c] = v.round() as u8;
                }
            }
        }
    }

    /// Draw a closed polyline with a simple DDA.
    pub fn draw_polygon(&mut self, points: &[(f64, f64)], color: [u8; 3]) {
        for i in 0..points.len() {
            let (a, b) = (points[i], points[(i + 1) % points.len()]);
            let steps = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
            for s in 0..=steps {
                let t = s as f64 / steps as f64;
                let x = (a.0 + (b.0 - a.0) * t).floor();
                let y = (a.1 + (b.1 - a.1) * t).floor();
                if x >= 0.0 && y >= 0.0 {
                    if let Some(px) = self.img.get_pixel_mut_checked(x as u32, y as u32) {
                        *px = Rgb(color);
                    }
                }
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        self.img
            .save_with_format(path, ImageFormat::Png)
            .map_err(|e| image_err(path, e))
    }
}
