use super::ImageBuffer;
use crate::error::{ensure, Result};

/// Dense 2D kernel with odd extents; `data` is row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2d {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Kernel2d {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        ensure!(
            width % 2 == 1 && height % 2 == 1,
            InvalidParameter,
            "kernel extents must be odd, got {width}x{height}"
        );
        ensure!(
            data.len() == width * height,
            InvalidParameter,
            "kernel of {width}x{height} needs {} taps, got {}",
            width * height,
            data.len()
        );
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn identity() -> Self {
        Self {
            width: 3,
            height: 3,
            data: vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0],
        }
    }

    /// Outer product `col * row` of two odd-length 1D factors.
    pub fn separable(row: &[f64], col: &[f64]) -> Result<Self> {
        let data = col
            .iter()
            .flat_map(|c| row.iter().map(move |r| c * r))
            .collect();
        Self::new(row.len(), col.len(), data)
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

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }
}

/// Mirror an out-of-range index back into `0..len` without repeating the edge
/// sample (`-1 -> 1`, `len -> len - 2`).
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// True 2D convolution (kernel flipped) with reflect-padded borders.
pub fn convolve2d(img: &ImageBuffer, kernel: &Kernel2d) -> Result<ImageBuffer> {
    img.require_gray()?;
    let (w, h) = img.dims();
    let rx = (kernel.width / 2) as isize;
    let ry = (kernel.height / 2) as isize;
    let src = img.data();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for ky in 0..kernel.height {
                let sy = reflect_index(y as isize + ry - ky as isize, h);
                let row = &src[sy * w..(sy + 1) * w];
                for kx in 0..kernel.width {
                    let sx = reflect_index(x as isize + rx - kx as isize, w);
                    acc += kernel.at(kx, ky) * row[sx];
                }
            }
            out[y * w + x] = acc;
        }
    }
    Ok(ImageBuffer::from_gray_unchecked(w, h, out))
}

/// Convolution with a separable kernel `col * row`, done as two 1D passes.
pub fn convolve_separable(img: &ImageBuffer, row: &[f64], col: &[f64]) -> Result<ImageBuffer> {
    img.require_gray()?;
    ensure!(
        row.len() % 2 == 1 && col.len() % 2 == 1,
        InvalidParameter,
        "separable factors must have odd length"
    );
    let (w, h) = img.dims();
    let rx = (row.len() / 2) as isize;
    let ry = (col.len() / 2) as isize;
    let src = img.data();

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let line = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, &c) in row.iter().enumerate() {
                acc += c * line[reflect_index(x as isize + rx - k as isize, w)];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, &c) in col.iter().enumerate() {
            let sy = reflect_index(y as isize + ry - k as isize, h);
            let (dst, line) = (&mut out[y * w..(y + 1) * w], &tmp[sy * w..(sy + 1) * w]);
            for (d, s) in dst.iter_mut().zip(line) {
                *d += c * s;
            }
        }
    }
    Ok(ImageBuffer::from_gray_unchecked(w, h, out))
}
