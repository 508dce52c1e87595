//! Layer primitives with explicit forward and reverse-mode backward passes.
//!
//! Activations are channel-major (`C × H × W`) single samples.

use super::real::{matmul, Real};

/// Channel-major activation volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![T::ZERO; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor shape mismatch");
        Self {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> T {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[T] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }
}

/// Unfold `k × k` zero-padded neighbourhoods into a `(C·k²) × (H·W)` matrix.
pub fn im2col<T: Real>(x: &Tensor3<T>, k: usize) -> Vec<T> {
    let (h, w) = (x.height, x.width);
    let r = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![T::ZERO; x.channels * k * k * hw];
    for c in 0..x.channels {
        let plane = x.plane(c);
        for ky in 0..k {
            let dy = ky as isize - r;
            for kx in 0..k {
                let dx = kx as isize - r;
                let row = &mut cols[((c * k + ky) * k + kx) * hw..][..hw];
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &plane[sy as usize * w..][..w];
                    let dst = &mut row[y * w..][..w];
                    let sx0 = (x0 as isize + dx) as usize;
                    dst[x0..x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-add columns back onto the input grid.
pub fn col2im<T: Real>(cols: &[T], channels: usize, h: usize, w: usize, k: usize) -> Tensor3<T> {
    let r = (k / 2) as isize;
    let hw = h * w;
    let mut out = Tensor3::zeros(channels, h, w);
    for c in 0..channels {
        let plane = &mut out.data[c * hw..(c + 1) * hw];
        for ky in 0..k {
            let dy = ky as isize - r;
            for kx in 0..k {
                let dx = kx as isize - r;
                let row = &cols[((c * k + ky) * k + kx) * hw..][..hw];
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                if x0 >= x1 {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..][..w];
                    let sx0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + sx0..][..x1 - x0];
                    for (d, &s) in dst.iter_mut().zip(&src[x0..x1]) {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// Shape of a `k × k`, stride-1, same-padded convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl ConvShape {
    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn fan_out(&self) -> usize {
        self.out_channels * self.kernel * self.kernel
    }
}

/// Returns the output and the unfolded input needed by the backward pass.
pub fn conv_forward<T: Real>(
    x: &Tensor3<T>,
    shape: ConvShape,
    weight: &[T],
    bias: &[T],
) -> (Tensor3<T>, Vec<T>) {
    debug_assert_eq!(x.channels, shape.in_channels);
    let cols = im2col(x, shape.kernel);
    let hw = x.plane_len();
    let mut out = Tensor3::zeros(shape.out_channels, x.height, x.width);
    for (plane, &b) in out.data.chunks_exact_mut(hw).zip(bias) {
        plane.fill(b);
    }
    matmul(
        shape.out_channels,
        shape.fan_in(),
        hw,
        weight,
        false,
        &cols,
        false,
        &mut out.data,
        true,
    );
    (out, cols)
}

/// Accumulates weight/bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv_backward<T: Real>(
    dy: &Tensor3<T>,
    cols: &[T],
    shape: ConvShape,
    weight: &[T],
    grad_weight: &mut [T],
    grad_bias: &mut [T],
    need_input_grad: bool,
) -> Option<Tensor3<T>> {
    let hw = dy.plane_len();
    matmul(
        shape.out_channels,
        hw,
        shape.fan_in(),
        &dy.data,
        false,
        cols,
        true,
        grad_weight,
        true,
    );
    for (g, plane) in grad_bias.iter_mut().zip(dy.data.chunks_exact(hw)) {
        let mut s = T::ZERO;
        for &v in plane {
            s += v;
        }
        *g += s;
    }
    if !need_input_grad {
        return None;
    }
    let mut dcols = vec![T::ZERO; shape.fan_in() * hw];
    matmul(
        shape.fan_in(),
        shape.out_channels,
        hw,
        weight,
        true,
        &dy.data,
        false,
        &mut dcols,
        false,
    );
    Some(col2im(
        &dcols,
        shape.in_channels,
        dy.height,
        dy.width,
        shape.kernel,
    ))
}

pub fn relu_forward<T: Real>(x: &mut Tensor3<T>) {
    for v in &mut x.data {
        if *v < T::ZERO {
            *v = T::ZERO;
        }
    }
}

/// `dy` masked by the positive entries of the forward output.
pub fn relu_backward<T: Real>(dy: &mut Tensor3<T>, y: &Tensor3<T>) {
    for (d, &v) in dy.data.iter_mut().zip(&y.data) {
        if v <= T::ZERO {
            *d = T::ZERO;
        }
    }
}

/// 2×2 stride-2 max pooling. Each output records the in-plane index of its
/// maximum (first one in raster order on ties).
pub fn maxpool_forward<T: Real>(x: &Tensor3<T>) -> (Tensor3<T>, Vec<u32>) {
    let (oh, ow) = (x.height / 2, x.width / 2);
    let mut out = Tensor3::zeros(x.channels, oh, ow);
    let mut indices = vec![0u32; x.channels * oh * ow];
    for c in 0..x.channels {
        let plane = x.plane(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (2 * oy) * x.width + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (2 * oy + dy) * x.width + 2 * ox + dx;
                    if plane[i] > plane[best] {
                        best = i;
                    }
                }
                let o = (c * oh + oy) * ow + ox;
                out.data[o] = plane[best];
                indices[o] = best as u32;
            }
        }
    }
    (out, indices)
}

pub fn maxpool_backward<T: Real>(
    dy: &Tensor3<T>,
    indices: &[u32],
    in_height: usize,
    in_width: usize,
) -> Tensor3<T> {
    let mut dx = Tensor3::zeros(dy.channels, in_height, in_width);
    let (ohw, ihw) = (dy.plane_len(), in_height * in_width);
    for c in 0..dy.channels {
        for o in 0..ohw {
            dx.data[c * ihw + indices[c * ohw + o] as usize] += dy.data[c * ohw + o];
        }
    }
    dx
}

/// Place each pooled value back at its recorded position; zeros elsewhere.
pub fn unpool_forward<T: Real>(
    x: &Tensor3<T>,
    indices: &[u32],
    out_height: usize,
    out_width: usize,
) -> Tensor3<T> {
    let mut out = Tensor3::zeros(x.channels, out_height, out_width);
    let (ihw, ohw) = (x.plane_len(), out_height * out_width);
    for c in 0..x.channels {
        for i in 0..ihw {
            out.data[c * ohw + indices[c * ihw + i] as usize] = x.data[c * ihw + i];
        }
    }
    out
}

pub fn unpool_backward<T: Real>(dy: &Tensor3<T>, indices: &[u32], height: usize, width: usize) -> Tensor3<T> {
    let mut dx = Tensor3::zeros(dy.channels, height, width);
    let (ihw, ohw) = (height * width, dy.plane_len());
    for c in 0..dy.channels {
        for i in 0..ihw {
            dx.data[c * ihw + i] = dy.data[c * ohw + indices[c * ihw + i] as usize];
        }
    }
    dx
}

/// Per-pixel softmax over channels.
pub fn softmax<T: Real>(logits: &Tensor3<T>) -> Tensor3<T> {
    let hw = logits.plane_len();
    let classes = logits.channels;
    let mut out = Tensor3::zeros(classes, logits.height, logits.width);
    for p in 0..hw {
        let mut max = logits.data[p];
        for c in 1..classes {
            let v = logits.data[c * hw + p];
            if v > max {
                max = v;
            }
        }
        let mut sum = T::ZERO;
        for c in 0..classes {
            let e = (logits.data[c * hw + p] - max).exp();
            out.data[c * hw + p] = e;
            sum += e;
        }
        for c in 0..classes {
            out.data[c * hw + p] = out.data[c * hw + p] / sum;
        }
    }
    out
}

/// Weighted pixelwise cross-entropy `(1/N) Σ w[y] · (−ln p_y)` straight from
/// logits, with its gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Real>(
    logits: &Tensor3<T>,
    target: &[u8],
    class_weights: &[T],
) -> (T, Tensor3<T>) {
    let hw = logits.plane_len();
    let classes = logits.channels;
    let probs = softmax(logits);
    let inv_n = T::ONE / T::from_f64(hw as f64);
    let mut grad = probs.clone();
    let mut loss = 0.0f64;
    for p in 0..hw {
        let y = target[p] as usize;
        let w = class_weights[y];
        let mut max = logits.data[p];
        for c in 1..classes {
            let v = logits.data[c * hw + p];
            if v > max {
                max = v;
            }
        }
        let mut sum = T::ZERO;
        for c in 0..classes {
            sum += (logits.data[c * hw + p] - max).exp();
        }
        let log_p = logits.data[y * hw + p] - max - sum.ln();
        loss -= (w * log_p).to_f64();
        let scale = w * inv_n;
        for c in 0..classes {
            let g = &mut grad.data[c * hw + p];
            let onehot = if c == y { T::ONE } else { T::ZERO };
            *g = scale * (*g - onehot);
        }
    }
    (T::from_f64(loss / hw as f64), grad)
}
