use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward, conv_forward, maxpool_backward, maxpool_forward, relu_backward, relu_forward,
    softmax, softmax_cross_entropy, unpool_backward, unpool_forward, ConvShape, Tensor3,
};
use super::real::Real;
use crate::error::{ensure, Error, Result};
use crate::imaging::ImageBuffer;

/// Architecture of the SegNet-style encoder-decoder.
///
/// Each encoder stage is conv + ReLU + 2×2 max-pool (recording argmax
/// positions); each decoder stage unpools with those positions and applies
/// conv + ReLU, and the last unpooled map goes through a classifier conv.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// `(height, width)` in pixels.
    pub input_size: (usize, usize),
    pub in_channels: usize,
    /// Background plus threat classes.
    pub num_classes: usize,
    pub stage_channels: Vec<usize>,
    pub kernel_size: usize,
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            input_size: (128, 128),
            in_channels: 1,
            num_classes: 4,
            stage_channels: vec![16, 32, 64],
            kernel_size: 3,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        let stages = self.stage_channels.len();
        ensure!(stages >= 1, InvalidConfig, "at least one encoder stage is required");
        ensure!(
            self.stage_channels.iter().all(|&c| c >= 1),
            InvalidConfig,
            "stage channel counts must be positive"
        );
        let factor = 1usize << stages;
        let (h, w) = self.input_size;
        ensure!(
            h >= factor && w >= factor && h % factor == 0 && w % factor == 0,
            InvalidConfig,
            "input size {h}x{w} must be a positive multiple of {factor} for {stages} stages"
        );
        ensure!(
            (2..=256).contains(&self.num_classes),
            InvalidConfig,
            "num_classes must be in 2..=256, got {}",
            self.num_classes
        );
        ensure!(self.in_channels >= 1, InvalidConfig, "in_channels must be positive");
        ensure!(
            self.kernel_size % 2 == 1,
            InvalidConfig,
            "kernel size must be odd, got {}",
            self.kernel_size
        );
        Ok(())
    }

    /// Named convolution shapes in parameter order.
    pub fn conv_layers(&self) -> Vec<(String, ConvShape)> {
        let k = self.kernel_size;
        let ch = &self.stage_channels;
        let stages = ch.len();
        let mut layers = Vec::with_capacity(2 * stages);
        let mut prev = self.in_channels;
        for (s, &c) in ch.iter().enumerate() {
            layers.push((
                format!("enc{}", s + 1),
                ConvShape { in_channels: prev, out_channels: c, kernel: k },
            ));
            prev = c;
        }
        for s in (1..stages).rev() {
            layers.push((
                format!("dec{}", s + 1),
                ConvShape { in_channels: ch[s], out_channels: ch[s - 1], kernel: k },
            ));
        }
        layers.push((
            "cls".to_string(),
            ConvShape { in_channels: ch[0], out_channels: self.num_classes, kernel: k },
        ));
        layers
    }
}

/// Per-pixel class labels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, class: u8) {
        self.labels[y * self.width + x] = class;
    }

    pub fn max_class(&self) -> u8 {
        self.labels.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<T>,
}

/// Weights and biases, two tensors per convolution in
/// [`BackboneConfig::conv_layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneParams<T> {
    pub config: BackboneConfig,
    pub tensors: Vec<ParamTensor<T>>,
}

impl<T: Real> BackboneParams<T> {
    /// Glorot-uniform weights `±√(6/(fan_in+fan_out))`, zero biases, drawn
    /// from a ChaCha8 stream seeded by `config.seed`.
    pub fn init(config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut tensors = Vec::new();
        for (name, shape) in config.conv_layers() {
            let limit = (6.0 / (shape.fan_in() + shape.fan_out()) as f64).sqrt();
            let weight = (0..shape.weight_len())
                .map(|_| T::from_f64(rng.random_range(-limit..limit)))
                .collect();
            tensors.push(ParamTensor {
                name: format!("{name}.weight"),
                dims: vec![shape.out_channels, shape.in_channels, shape.kernel, shape.kernel],
                data: weight,
            });
            tensors.push(ParamTensor {
                name: format!("{name}.bias"),
                dims: vec![shape.out_channels],
                data: vec![T::ZERO; shape.out_channels],
            });
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    dims: t.dims.clone(),
                    data: vec![T::ZERO; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn cast<U: Real>(&self) -> BackboneParams<U> {
        BackboneParams {
            config: self.config.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| ParamTensor {
                    name: t.name.clone(),
                    dims: t.dims.clone(),
                    data: t.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// Checks that tensor names and shapes match the architecture.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let layers = self.config.conv_layers();
        ensure!(
            self.tensors.len() == 2 * layers.len(),
            InvalidConfig,
            "expected {} parameter tensors, found {}",
            2 * layers.len(),
            self.tensors.len()
        );
        for (i, (name, shape)) in layers.iter().enumerate() {
            let (w, b) = (&self.tensors[2 * i], &self.tensors[2 * i + 1]);
            let wdims = vec![shape.out_channels, shape.in_channels, shape.kernel, shape.kernel];
            ensure!(
                w.name == format!("{name}.weight") && w.dims == wdims && w.data.len() == shape.weight_len(),
                InvalidConfig,
                "tensor {} does not match layer {name}",
                w.name
            );
            ensure!(
                b.name == format!("{name}.bias") && b.dims == vec![shape.out_channels] && b.data.len() == shape.out_channels,
                InvalidConfig,
                "tensor {} does not match layer {name}",
                b.name
            );
        }
        Ok(())
    }

    fn conv(&self, layer: usize) -> (&[T], &[T]) {
        (&self.tensors[2 * layer].data, &self.tensors[2 * layer + 1].data)
    }

    fn check_input(&self, input: &Tensor3<T>) -> Result<()> {
        let (h, w) = self.config.input_size;
        ensure!(
            input.channels == self.config.in_channels && input.height == h && input.width == w,
            InvalidInput,
            "input is {}x{}x{}, backbone expects {}x{}x{}",
            input.channels,
            input.height,
            input.width,
            self.config.in_channels,
            h,
            w
        );
        ensure!(
            input.data.iter().all(|v| v.is_finite()),
            NonFinite,
            "backbone input contains non-finite values"
        );
        Ok(())
    }

    fn run_forward(&self, input: &Tensor3<T>) -> (Tensor3<T>, Cache<T>) {
        let layers = self.config.conv_layers();
        let stages = self.config.stage_channels.len();
        let mut cache = Cache::default();
        let mut x = input.clone();
        let mut li = 0;
        for _ in 0..stages {
            let (w, b) = self.conv(li);
            let (mut y, cols) = conv_forward(&x, layers[li].1, w, b);
            relu_forward(&mut y);
            let (pooled, idx) = maxpool_forward(&y);
            cache.cols.push(cols);
            cache.pools.push((idx, y.height, y.width));
            cache.activations.push(y);
            x = pooled;
            li += 1;
        }
        for s in (1..stages).rev() {
            let (idx, h, w) = &cache.pools[s];
            let up = unpool_forward(&x, idx, *h, *w);
            let (wt, b) = self.conv(li);
            let (mut y, cols) = conv_forward(&up, layers[li].1, wt, b);
            relu_forward(&mut y);
            cache.cols.push(cols);
            cache.activations.push(y.clone());
            x = y;
            li += 1;
        }
        let (idx, h, w) = &cache.pools[0];
        let up = unpool_forward(&x, idx, *h, *w);
        let (wt, b) = self.conv(li);
        let (logits, cols) = conv_forward(&up, layers[li].1, wt, b);
        cache.cols.push(cols);
        (logits, cache)
    }

    /// Raw class scores before the softmax.
    pub fn logits(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.check_input(input)?;
        Ok(self.run_forward(input).0)
    }

    /// Per-pixel class probabilities (`num_classes × H × W`).
    pub fn forward(&self, input: &Tensor3<T>) -> Result<Tensor3<T>> {
        Ok(softmax(&self.logits(input)?))
    }

    /// Weighted cross-entropy of one sample and its exact gradient.
    pub fn loss_and_gradients(
        &self,
        input: &Tensor3<T>,
        target: &LabelMap,
        class_weights: &[f64],
    ) -> Result<(f64, BackboneParams<T>)> {
        self.check_input(input)?;
        check_target(&self.config, target, class_weights)?;
        let weights: Vec<T> = class_weights.iter().map(|&w| T::from_f64(w)).collect();
        let layers = self.config.conv_layers();
        let stages = self.config.stage_channels.len();
        let (logits, cache) = self.run_forward(input);
        let (loss, dlogits) = softmax_cross_entropy(&logits, &target.labels, &weights);

        let mut grads = self.zeros_like();
        let mut li = layers.len() - 1;
        // gradient w.r.t. the output of the unpool feeding layer `li`
        let mut d_up = self.conv_grad(&mut grads, li, &layers, &dlogits, &cache, true);
        let mut unpool_stage = 0;
        let mut act = cache.activations.len() - 1;
        for s in 1..stages {
            let (idx, h, w) = &cache.pools[unpool_stage];
            let mut d = unpool_backward(&d_up, idx, h / 2, w / 2);
            relu_backward(&mut d, &cache.activations[act]);
            li -= 1;
            d_up = self.conv_grad(&mut grads, li, &layers, &d, &cache, true);
            act -= 1;
            unpool_stage = s;
        }
        let (idx, h, w) = &cache.pools[unpool_stage];
        let mut d_pooled = unpool_backward(&d_up, idx, h / 2, w / 2);
        for s in (0..stages).rev() {
            let (idx, h, w) = &cache.pools[s];
            let mut d = maxpool_backward(&d_pooled, idx, *h, *w);
            relu_backward(&mut d, &cache.activations[s]);
            d_pooled = self.conv_grad(&mut grads, s, &layers, &d, &cache, s > 0);
        }
        Ok((loss.to_f64(), grads))
    }

    fn conv_grad(
        &self,
        grads: &mut BackboneParams<T>,
        layer: usize,
        layers: &[(String, ConvShape)],
        dy: &Tensor3<T>,
        cache: &Cache<T>,
        need_input: bool,
    ) -> Tensor3<T> {
        let (w, _) = self.conv(layer);
        let (gw, gb) = grads.tensors.split_at_mut(2 * layer + 1);
        let dx = conv_backward(
            dy,
            &cache.cols[layer],
            layers[layer].1,
            w,
            &mut gw[2 * layer].data,
            &mut gb[0].data,
            need_input,
        );
        dx.unwrap_or_else(|| Tensor3::zeros(0, 0, 0))
    }
}

#[derive(Default)]
struct Cache<T> {
    /// Unfolded inputs, indexed like the conv layers.
    cols: Vec<Vec<T>>,
    /// Post-ReLU outputs: encoder stages first, then decoder stages.
    activations: Vec<Tensor3<T>>,
    /// Argmax positions and pre-pool size for each encoder stage.
    pools: Vec<(Vec<u32>, usize, usize)>,
}

fn check_target(config: &BackboneConfig, target: &LabelMap, class_weights: &[f64]) -> Result<()> {
    let (h, w) = config.input_size;
    ensure!(
        target.width == w && target.height == h && target.labels.len() == w * h,
        InvalidInput,
        "label map is {}x{}, expected {w}x{h}",
        target.width,
        target.height
    );
    ensure!(
        (target.max_class() as usize) < config.num_classes,
        InvalidInput,
        "label {} out of range for {} classes",
        target.max_class(),
        config.num_classes
    );
    ensure!(
        class_weights.len() == config.num_classes,
        InvalidInput,
        "expected {} class weights, got {}",
        config.num_classes,
        class_weights.len()
    );
    Ok(())
}

/// Weighted pixelwise cross-entropy of given probabilities,
/// `(1/N) Σ w[y] · (−ln p_y)`.
pub fn loss<T: Real>(probs: &Tensor3<T>, target: &LabelMap, class_weights: &[f64]) -> Result<f64> {
    ensure!(
        probs.height == target.height && probs.width == target.width,
        InvalidInput,
        "probability map and label map differ in size"
    );
    ensure!(
        (target.max_class() as usize) < probs.channels && class_weights.len() == probs.channels,
        InvalidInput,
        "target classes or weights do not match {} probability channels",
        probs.channels
    );
    let hw = probs.plane_len();
    let total: f64 = target
        .labels
        .iter()
        .enumerate()
        .map(|(p, &y)| {
            let prob = probs.data[y as usize * hw + p].to_f64().max(f64::MIN_POSITIVE);
            -class_weights[y as usize] * prob.ln()
        })
        .sum();
    Ok(total / hw as f64)
}

/// Stack single-channel images into a network input.
pub fn input_from_images<T: Real>(images: &[&ImageBuffer]) -> Result<Tensor3<T>> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidInput("no input channels".into()))?;
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(images.len() * w * h);
    for img in images {
        img.require_gray()?;
        ensure!(img.dims() == (w, h), InvalidInput, "input channels differ in size");
        data.extend(img.data().iter().map(|&v| T::from_f64(v)));
    }
    Ok(Tensor3::from_vec(images.len(), h, w, data))
}
