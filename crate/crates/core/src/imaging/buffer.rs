use crate::error::{ensure, Error, Result};

/// Row-major raster of real intensities, one or three channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            width > 0 && height > 0,
            InvalidInput,
            "image dimensions must be positive, got {width}x{height}"
        );
        ensure!(
            channels == 1 || channels == 3,
            InvalidInput,
            "images have 1 or 3 channels, got {channels}"
        );
        ensure!(
            data.len() == width * height * channels,
            InvalidInput,
            "expected {} samples, got {}",
            width * height * channels,
            data.len()
        );
        ensure!(
            data.iter().all(|v| v.is_finite()),
            InvalidInput,
            "image contains non-finite samples"
        );
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image filled with `value`.
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            channels: 1,
            data: vec![value; width * height],
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// Single-channel image from a per-pixel function of `(x, y)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub(crate) fn from_gray_unchecked(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            channels: 1,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
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

    /// Sample of a single-channel image.
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[(y * self.width + x) * self.channels] = value;
    }

    pub fn require_gray(&self) -> Result<()> {
        ensure!(
            self.channels == 1,
            InvalidInput,
            "expected a single-channel image, got {} channels",
            self.channels
        );
        Ok(())
    }

    /// Luminance conversion (0.299R + 0.587G + 0.114B); gray images pass through.
    pub fn to_luminance(&self) -> ImageBuffer {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(3)
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Self::from_gray_unchecked(self.width, self.height, data)
    }

    /// Bilinear resize of a single-channel image (pixel-centre aligned).
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<ImageBuffer> {
        self.require_gray()?;
        ensure!(
            width > 0 && height > 0,
            InvalidParameter,
            "resize target must be non-empty"
        );
        if (width, height) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        let mut out = Vec::with_capacity(width * height);
        for y in 0..height {
            let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (self.height - 1) as f64);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let ty = fy - y0 as f64;
            for x in 0..width {
                let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (self.width - 1) as f64);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let tx = fx - x0 as f64;
                let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
                let bottom = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
        Ok(Self::from_gray_unchecked(width, height, out))
    }

    /// Linear min-max rescale to [0, 1]; constant images map to all zeros.
    pub fn normalized(&self) -> ImageBuffer {
        let (lo, hi) = self
            .data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        let range = hi - lo;
        let data = if range > 0.0 && range.is_finite() {
            self.data.iter().map(|v| (v - lo) / range).collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Self::from_parts_like(self, data)
    }

    fn from_parts_like(like: &ImageBuffer, data: Vec<f64>) -> ImageBuffer {
        ImageBuffer {
            width: like.width,
            height: like.height,
            channels: like.channels,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageBuffer {
        Self::from_parts_like(self, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Elementwise combination of two same-shaped images.
    pub fn zip_map(&self, other: &ImageBuffer, f: impl Fn(f64, f64) -> f64) -> Result<ImageBuffer> {
        ensure!(
            self.width == other.width
                && self.height == other.height
                && self.channels == other.channels,
            InvalidInput,
            "image shape mismatch"
        );
        Ok(Self::from_parts_like(
            self,
            self.data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        ))
    }

    /// Square root of the sum of squared samples.
    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &ImageBuffer) -> f64 {
        assert_eq!(self.data.len(), other.data.len());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// One boolean per pixel, row-major.
///
/// A mask is a subset of the whole plane: every pixel outside the frame has
/// the value `outside` (unset for every mask built by the constructors). Only
/// [`BinaryMask::complement`] flips it, so that morphological duality holds
/// exactly at the borders too.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    outside: bool,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
            outside: false,
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "mask of {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
            outside: false,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
            outside: false,
        }
    }

    /// Mask with the listed pixels set.
    pub fn from_pixels(width: usize, height: usize, pixels: &[(usize, usize)]) -> Self {
        let mut mask = Self::new(width, height);
        for &(x, y) in pixels {
            mask.set(x, y, true);
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    /// Value of the pixels beyond the frame.
    pub fn outside(&self) -> bool {
        self.outside
    }

    pub(crate) fn with_outside(mut self, outside: bool) -> Self {
        self.outside = outside;
        self
    }

    /// Out-of-range coordinates read as [`BinaryMask::outside`].
    #[inline]
    pub fn get_signed(&self, x: isize, y: isize) -> bool {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.bits[y as usize * self.width + x as usize]
        } else {
            self.outside
        }
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.bits[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn complement(&self) -> BinaryMask {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
            outside: !self.outside,
        }
    }

    fn check_same(&self, other: &BinaryMask) -> Result<()> {
        ensure!(
            self.dims() == other.dims(),
            InvalidInput,
            "mask dimensions differ: {:?} vs {:?}",
            self.dims(),
            other.dims()
        );
        Ok(())
    }

    pub fn union(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a || *b).collect(),
            outside: self.outside || other.outside,
        })
    }

    pub fn intersection(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.check_same(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().zip(&other.bits).map(|(a, b)| *a && *b).collect(),
            outside: self.outside && other.outside,
        })
    }

    pub fn union_in_place(&mut self, other: &BinaryMask) -> Result<()> {
        self.check_same(other)?;
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
        self.outside |= other.outside;
        Ok(())
    }

    /// Coordinates of set pixels in raster order.
    pub fn pixels(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    /// Nearest-neighbour resample (pixel-centre aligned).
    pub fn resize_nearest(&self, width: usize, height: usize) -> BinaryMask {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f64 / width as f64;
        let sy = self.height as f64 / height as f64;
        Self::from_fn(width, height, |x, y| {
            let src_x = (((x as f64 + 0.5) * sx) as usize).min(self.width - 1);
            let src_y = (((y as f64 + 0.5) * sy) as usize).min(self.height - 1);
            self.get(src_x, src_y)
        })
        .with_outside(self.outside)
    }

    /// 0.0 / 1.0 image view of the mask.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_gray_unchecked(
            self.width,
            self.height,
            self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageBuffer::new(0, 3, 1, vec![]).is_err());
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn luminance_weights() {
        let img = ImageBuffer::new(1, 1, 3, vec![1.0, 0.5, 0.25]).unwrap();
        let lum = img.to_luminance();
        assert_eq!(lum.channels(), 1);
        assert!((lum.get(0, 0) - (0.299 + 0.5 * 0.587 + 0.25 * 0.114)).abs() < 1e-15);
    }

    #[test]
    fn bilinear_preserves_constant_and_ramp_direction() {
        let img = ImageBuffer::filled(10, 7, 0.3);
        let r = img.resize_bilinear(23, 5).unwrap();
        assert!(r.data().iter().all(|v| (v - 0.3).abs() < 1e-12));

        let ramp = ImageBuffer::from_fn(16, 16, |x, _| x as f64);
        let half = ramp.resize_bilinear(8, 8).unwrap();
        for x in 1..8 {
            assert!(half.get(x, 3) > half.get(x - 1, 3));
        }
    }

    #[test]
    fn normalized_constant_is_zero() {
        let n = ImageBuffer::filled(4, 4, 2.0).normalized();
        assert!(n.data().iter().all(|&v| v == 0.0));
        let r = ImageBuffer::from_fn(4, 1, |x, _| x as f64 * 3.0 - 1.0).normalized();
        assert_eq!(r.data(), &[0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]);
    }

    #[test]
    fn nearest_resize_round_trips_on_integer_scale() {
        let m = BinaryMask::from_fn(6, 4, |x, y| (x + y) % 3 == 0);
        let up = m.resize_nearest(12, 8);
        assert_eq!(up.count(), m.count() * 4);
        assert_eq!(up.resize_nearest(6, 4), m);
    }
}
