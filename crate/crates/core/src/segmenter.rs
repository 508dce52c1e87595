//! Scan to detections: coherent representation, backbone, morphological
//! clean-up, then one box, mask and score per surviving contour component.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backbone::{BackboneConfig, BackboneParams, LabelMap, Real, Tensor3, TrainRecord};
use crate::error::{ensure, Error, Result};
use crate::imaging::{
    connected_components, erode, fill_closed_contour, min_bounding_rectangle, open, Aabb, BinaryMask, Connectivity,
    ImageBuffer, Point, RotatedRect, Shape,
};
use crate::tensor_core::{structure_tensor_representation, GaussianSpec};

/// What the backbone sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// Coherent structure-tensor representation.
    #[default]
    Tensor,
    /// Raw luminance, bypassing the tensor front end.
    Luminance,
    /// Both, as two channels.
    TensorLuminance,
}

impl InputMode {
    pub fn channels(self) -> usize {
        match self {
            InputMode::TensorLuminance => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Number of gradient orientations.
    pub m: usize,
    /// Number of tensors fused into the representation.
    pub k: usize,
    pub gaussian: GaussianSpec,
    /// `(height, width)` of the network input.
    pub input_size: (usize, usize),
    pub open_radius: usize,
    pub close_radius: usize,
    pub min_area: usize,
    /// Threat class names; class id `i + 1` is `class_names[i]`.
    pub class_names: Vec<String>,
    pub input_mode: InputMode,
    /// Thickness of the boundary band used as training target.
    pub boundary_width: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            m: 4,
            k: 2,
            gaussian: GaussianSpec::default(),
            input_size: (128, 128),
            open_radius: 1,
            close_radius: 3,
            min_area: 20,
            class_names: vec!["knife".into(), "gun".into(), "shuriken".into()],
            input_mode: InputMode::Tensor,
            boundary_width: 3,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.m >= 1, InvalidConfig, "m must be at least 1");
        let pairs = self.m * (self.m + 1) / 2;
        ensure!(
            (1..=pairs).contains(&self.k),
            InvalidConfig,
            "k must lie in 1..={pairs} for m = {}, got {}",
            self.m,
            self.k
        );
        self.gaussian
            .validate()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        ensure!(self.min_area >= 1, InvalidConfig, "min_area must be at least 1");
        ensure!(self.close_radius >= 1, InvalidConfig, "close_radius must be at least 1");
        ensure!(
            self.input_size.0 > 0 && self.input_size.1 > 0,
            InvalidConfig,
            "input size must be positive"
        );
        ensure!(!self.class_names.is_empty(), InvalidConfig, "at least one class name is required");
        ensure!(self.class_names.len() < 256, InvalidConfig, "at most 255 classes are supported");
        ensure!(self.boundary_width >= 1, InvalidConfig, "boundary width must be at least 1");
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len() + 1
    }

    /// Backbone shape implied by this pipeline.
    pub fn backbone_config(&self, stage_channels: Vec<usize>, seed: u64) -> BackboneConfig {
        BackboneConfig {
            input_size: self.input_size,
            in_channels: self.input_mode.channels(),
            num_classes: self.num_classes(),
            stage_channels,
            kernel_size: 3,
            seed,
        }
    }

    pub fn check_params<T: Real>(&self, params: &BackboneParams<T>) -> Result<()> {
        let c = &params.config;
        ensure!(
            c.input_size == self.input_size
                && c.in_channels == self.input_mode.channels()
                && c.num_classes == self.num_classes(),
            InvalidInput,
            "model ({}x{}, {} channels, {} classes) does not fit the pipeline ({}x{}, {} channels, {} classes)",
            c.input_size.0,
            c.input_size.1,
            c.in_channels,
            c.num_classes,
            self.input_size.0,
            self.input_size.1,
            self.input_mode.channels(),
            self.num_classes()
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_id: usize,
    pub score: f64,
    pub rbox: RotatedRect,
    pub aabb: Aabb,
    pub mask: BinaryMask,
}

fn resized_luminance(scan: &ImageBuffer, config: &PipelineConfig) -> Result<ImageBuffer> {
    let gray = scan.to_luminance();
    let (h, w) = config.input_size;
    if gray.dims() == (w, h) {
        Ok(gray)
    } else {
        gray.resize_bilinear(w, h)
    }
}

/// Luminance, resize to the input size, then the coherent representation.
pub fn preprocess(scan: &ImageBuffer, config: &PipelineConfig) -> Result<ImageBuffer> {
    config.validate()?;
    let gray = resized_luminance(scan, config)?;
    Ok(structure_tensor_representation(&gray, config.m, config.k, &config.gaussian)?.values)
}

/// Shift and scale to zero mean and unit variance. Constant images map to
/// zero.
pub fn standardize(img: &ImageBuffer) -> ImageBuffer {
    let n = img.data().len() as f64;
    let mean = img.data().iter().sum::<f64>() / n;
    let var = img.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 1e-12 { 1.0 / var.sqrt() } else { 0.0 };
    img.map(|v| (v - mean) * scale)
}

/// Backbone input channels for the configured input mode, each standardized.
pub fn network_input<T: Real>(scan: &ImageBuffer, config: &PipelineConfig) -> Result<Tensor3<T>> {
    config.validate()?;
    let channels = match config.input_mode {
        InputMode::Tensor => vec![preprocess(scan, config)?],
        InputMode::Luminance => vec![resized_luminance(scan, config)?],
        InputMode::TensorLuminance => vec![preprocess(scan, config)?, resized_luminance(scan, config)?],
    };
    let channels: Vec<ImageBuffer> = channels.iter().map(standardize).collect();
    let refs: Vec<&ImageBuffer> = channels.iter().collect();
    crate::backbone::input_from_images(&refs)
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: LabelMap,
    /// `num_classes × H × W` probabilities.
    pub probs: Tensor3<f32>,
}

/// Per-pixel argmax of the class probabilities; ties go to the lower class.
pub fn argmax_labels<T: Real>(probs: &Tensor3<T>) -> LabelMap {
    let hw = probs.plane_len();
    let mut labels = LabelMap::new(probs.width, probs.height);
    for p in 0..hw {
        let mut best = 0;
        for c in 1..probs.channels {
            if probs.data[c * hw + p] > probs.data[best * hw + p] {
                best = c;
            }
        }
        labels.labels[p] = best as u8;
    }
    labels
}

pub fn segment(scan: &ImageBuffer, params: &BackboneParams<f32>, config: &PipelineConfig) -> Result<Segmentation> {
    config.check_params(params)?;
    let input = network_input::<f32>(scan, config)?;
    let probs = params.forward(&input)?;
    ensure!(
        probs.data.iter().all(|v| v.is_finite()),
        NonFinite,
        "backbone produced non-finite probabilities"
    );
    Ok(Segmentation {
        labels: argmax_labels(&probs),
        probs,
    })
}

/// Turn a label map into detections in the frame of the original scan.
///
/// For each threat class, in ascending id: binarize, open, label 8-connected
/// components, drop small ones. Each survivor yields a filled mask, a minimum
/// bounding rectangle of its pixel centres grown by one pixel, the rectangle's
/// axis-aligned envelope, and the mean class probability over the component.
pub fn postprocess<T: Real>(
    labels: &LabelMap,
    probs: &Tensor3<T>,
    config: &PipelineConfig,
    original_size: (usize, usize),
) -> Result<Vec<Detection>> {
    let (w, h) = (labels.width, labels.height);
    ensure!(
        probs.width == w && probs.height == h && labels.labels.len() == w * h,
        InvalidInput,
        "label map and probabilities differ in size"
    );
    ensure!(
        (labels.max_class() as usize) < probs.channels,
        InvalidInput,
        "label map refers to class {} but only {} probability channels exist",
        labels.max_class(),
        probs.channels
    );
    let (ow, oh) = original_size;
    ensure!(ow > 0 && oh > 0, InvalidInput, "original size must be positive");
    let (sx, sy) = (ow as f64 / w as f64, oh as f64 / h as f64);
    let hw = w * h;

    let per_class: Vec<Result<Vec<Detection>>> = (1..probs.channels)
        .into_par_iter()
        .map(|class| {
            let binary = BinaryMask::from_fn(w, h, |x, y| labels.get(x, y) as usize == class);
            if binary.is_empty() {
                return Ok(Vec::new());
            }
            let cleaned = if config.open_radius > 0 {
                open(&binary, config.open_radius, Shape::Disk)?
            } else {
                binary
            };
            let mut out = Vec::new();
            for comp in connected_components(&cleaned, Connectivity::Eight) {
                if comp.area() < config.min_area {
                    continue;
                }
                let contour = BinaryMask::from_pixels(w, h, &comp.pixels);
                let filled = fill_closed_contour(&contour, config.close_radius)?;
                let centres: Vec<Point> = comp.pixels.iter().map(|&(x, y)| (x as f64 + 0.5, y as f64 + 0.5)).collect();
                let rbox = min_bounding_rectangle(&centres)?.inflated(1.0).scaled(sx, sy);
                let score = comp
                    .pixels
                    .iter()
                    .map(|&(x, y)| probs.data[class * hw + y * w + x].to_f64())
                    .sum::<f64>()
                    / comp.area() as f64;
                let mask = if (ow, oh) == (w, h) { filled } else { filled.resize_nearest(ow, oh) };
                out.push(Detection {
                    class_id: class,
                    score: score.clamp(0.0, 1.0),
                    aabb: rbox.envelope(),
                    rbox,
                    mask,
                });
            }
            Ok(out)
        })
        .collect();
    let mut detections = Vec::new();
    for d in per_class {
        detections.extend(d?);
    }
    detections.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(detections)
}

/// Full pipeline on one scan. Detections come sorted by descending score.
pub fn detect(scan: &ImageBuffer, params: &BackboneParams<f32>, config: &PipelineConfig) -> Result<Vec<Detection>> {
    let seg = segment(scan, params, config)?;
    postprocess(&seg.labels, &seg.probs, config, scan.dims())
}

/// Training labels: the band of width `config.boundary_width` just inside
/// each item's mask carries the item's class, everything else is background.
/// Masks are first brought to the network input size.
pub fn boundary_target(items: &[(usize, &BinaryMask)], config: &PipelineConfig) -> Result<LabelMap> {
    let (h, w) = config.input_size;
    let mut target = LabelMap::new(w, h);
    for &(class, mask) in items {
        ensure!(
            (1..config.num_classes()).contains(&class),
            InvalidInput,
            "class id {class} outside 1..{}",
            config.num_classes()
        );
        let m = if mask.dims() == (w, h) { mask.clone() } else { mask.resize_nearest(w, h) };
        let interior = erode(&m, config.boundary_width, Shape::Square)?;
        for (x, y) in m.pixels() {
            if !interior.get(x, y) {
                target.set(x, y, class as u8);
            }
        }
    }
    Ok(target)
}

/// Network input and boundary target for an annotated scan.
pub fn training_record(
    scan: &ImageBuffer,
    items: &[(usize, &BinaryMask)],
    config: &PipelineConfig,
) -> Result<TrainRecord<f32>> {
    Ok(TrainRecord {
        input: network_input(scan, config)?,
        target: boundary_target(items, config)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn small_config() -> PipelineConfig {
        PipelineConfig {
            input_size: (64, 64),
            class_names: vec!["a".into(), "b".into()],
            ..Default::default()
        }
    }

    fn zero_head_params(config: &PipelineConfig) -> BackboneParams<f32> {
        let mut p = BackboneParams::<f32>::init(&config.backbone_config(vec![4, 8], 1)).unwrap();
        let n = p.tensors.len();
        for t in &mut p.tensors[n - 2..] {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        p
    }

    fn blob_scan(size: usize) -> ImageBuffer {
        ImageBuffer::from_fn(size, size, |x, y| {
            let (dx, dy) = (x as f64 - size as f64 / 2.0, y as f64 - size as f64 / 2.0);
            if dx.hypot(dy) < size as f64 / 5.0 {
                0.3
            } else {
                0.9
            }
        })
    }

    #[test]
    fn config_validation() {
        PipelineConfig::default().validate().unwrap();
        assert!(PipelineConfig { k: 11, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { k: 0, ..Default::default() }.validate().is_err());
        assert!(PipelineConfig { min_area: 0, ..Default::default() }.validate().is_err());
        let d = PipelineConfig::default();
        assert_eq!((d.m, d.k, d.open_radius, d.close_radius, d.min_area), (4, 2, 1, 3, 20));
    }

    #[test]
    fn preprocess_properties() {
        let cfg = small_config();
        let gray = blob_scan(64);
        let rep = preprocess(&gray, &cfg).unwrap();
        assert_eq!(rep.dims(), (64, 64));
        assert!(rep.data().iter().all(|v| (0.0..=1.0).contains(v)));

        let rgb = ImageBuffer::new(64, 64, 3, gray.data().iter().flat_map(|&v| [v, v, v]).collect()).unwrap();
        assert_eq!(preprocess(&rgb, &cfg).unwrap(), rep);

        let constant = ImageBuffer::filled(100, 80, 0.4);
        assert!(preprocess(&constant, &cfg).unwrap().data().iter().all(|&v| v == 0.0));
        assert_eq!(preprocess(&blob_scan(96), &cfg).unwrap().dims(), (64, 64));
        assert!(ImageBuffer::new(0, 5, 1, vec![]).is_err());
    }

    #[test]
    fn untrained_head_yields_background() {
        let cfg = small_config();
        let p = zero_head_params(&cfg);
        let seg = segment(&blob_scan(64), &p, &cfg).unwrap();
        assert_eq!((seg.labels.width, seg.labels.height), (64, 64));
        assert!(seg.labels.labels.iter().all(|&l| l == 0));
        assert!(detect(&blob_scan(64), &p, &cfg).unwrap().is_empty());
    }

    #[test]
    fn mismatched_params_rejected() {
        let cfg = small_config();
        let p = zero_head_params(&PipelineConfig { class_names: vec!["a".into()], ..small_config() });
        assert!(matches!(segment(&blob_scan(64), &p, &cfg), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn labels_within_class_range() {
        let cfg = small_config();
        let p = BackboneParams::<f32>::init(&cfg.backbone_config(vec![4, 8], 3)).unwrap();
        let seg = segment(&blob_scan(64), &p, &cfg).unwrap();
        assert!(seg.labels.labels.iter().all(|&l| (l as usize) < cfg.num_classes()));
    }

    /// Inner boundary of a digital disk, three pixels thick.
    fn ring(size: usize, r: f64) -> (BinaryMask, BinaryMask) {
        let c = size as f64 / 2.0;
        let disk = BinaryMask::from_fn(size, size, |x, y| (x as f64 + 0.5 - c).hypot(y as f64 + 0.5 - c) <= r);
        let inner = erode(&disk, 3, Shape::Square).unwrap();
        let ring = BinaryMask::from_fn(size, size, |x, y| disk.get(x, y) && !inner.get(x, y));
        (ring, disk)
    }

    fn probs_for(labels: &LabelMap, classes: usize, f: impl Fn(usize, usize) -> f32) -> Tensor3<f32> {
        let (w, h) = (labels.width, labels.height);
        let mut t = Tensor3::zeros(classes, h, w);
        for y in 0..h {
            for x in 0..w {
                let c = labels.get(x, y) as usize;
                let p = f(x, y);
                for k in 0..classes {
                    t.data[(k * h + y) * w + x] = if k == c { p } else { (1.0 - p) / (classes - 1) as f32 };
                }
            }
        }
        t
    }

    #[test]
    fn ring_becomes_one_filled_detection() {
        let cfg = small_config();
        let (ring, disk) = ring(64, 14.0);
        let mut labels = LabelMap::new(64, 64);
        for (x, y) in ring.pixels() {
            labels.set(x, y, 1);
        }
        // probabilities vary over the ring so the mean is non-trivial
        let probs = probs_for(&labels, 3, |x, _| if x < 32 { 0.9 } else { 0.6 });
        let dets = postprocess(&labels, &probs, &cfg, (64, 64)).unwrap();
        assert_eq!(dets.len(), 1);
        let d = &dets[0];
        assert_eq!(d.class_id, 1);
        let left = ring.pixels().iter().filter(|p| p.0 < 32).count() as f64;
        let total = ring.count() as f64;
        let expect = (0.9f32 as f64 * left + 0.6f32 as f64 * (total - left)) / total;
        assert!((d.score - expect).abs() < 1e-9, "{} vs {expect}", d.score);
        let iou = crate::metrics::mask_iou(&d.mask, &disk).unwrap();
        assert!(iou > 0.95, "{iou}");
        let area = d.mask.count() as f64;
        assert!((area - PI * 14.0 * 14.0).abs() / (PI * 196.0) < 0.05);
        for (x, y) in d.mask.pixels() {
            assert!(d.rbox.contains((x as f64 + 0.5, y as f64 + 0.5), 1.0));
        }
        assert!(ring.pixels().iter().all(|&(x, y)| d.mask.get(x, y)));
        assert_eq!(d.aabb, d.rbox.envelope());
    }

    #[test]
    fn speckle_is_removed() {
        let cfg = small_config();
        let mut labels = LabelMap::new(64, 64);
        labels.set(10, 10, 2);
        labels.set(40, 20, 2);
        let probs = probs_for(&labels, 3, |_, _| 0.99);
        assert!(postprocess(&labels, &probs, &cfg, (64, 64)).unwrap().is_empty());
        let empty = LabelMap::new(64, 64);
        assert!(postprocess(&empty, &probs_for(&empty, 3, |_, _| 0.9), &cfg, (64, 64)).unwrap().is_empty());
    }

    #[test]
    fn geometry_rescales_to_original_frame() {
        let cfg = small_config();
        let (ring, _) = ring(64, 10.0);
        let mut labels = LabelMap::new(64, 64);
        for (x, y) in ring.pixels() {
            // shift the ring off-centre
            if x + 12 < 64 {
                labels.set(x + 12, y, 1);
            }
        }
        let probs = probs_for(&labels, 3, |_, _| 0.8);
        let small = postprocess(&labels, &probs, &cfg, (64, 64)).unwrap();
        let big = postprocess(&labels, &probs, &cfg, (128, 96)).unwrap();
        assert_eq!((small.len(), big.len()), (1, 1));
        let (a, b) = (small[0].aabb.center(), big[0].aabb.center());
        assert!((a.0 * 2.0 - b.0).abs() < 1.0 && (a.1 * 1.5 - b.1).abs() < 1.0);
        assert_eq!(big[0].mask.dims(), (128, 96));
    }

    #[test]
    fn detections_sorted_and_disjoint() {
        let cfg = small_config();
        let mut labels = LabelMap::new(64, 64);
        for y in 0..64 {
            for x in 0..64 {
                let in_box = |x0: usize, y0: usize| (x0..x0 + 12).contains(&x) && (y0..y0 + 12).contains(&y);
                if in_box(2, 2) || in_box(40, 40) {
                    labels.set(x, y, 1);
                } else if in_box(40, 2) {
                    labels.set(x, y, 2);
                }
            }
        }
        let probs = probs_for(&labels, 3, |x, y| 0.4 + (x + y) as f32 / 256.0);
        let dets = postprocess(&labels, &probs, &cfg, (64, 64)).unwrap();
        assert_eq!(dets.len(), 3);
        assert!(dets.windows(2).all(|w| w[0].score >= w[1].score));
        for i in 0..3 {
            for j in i + 1..3 {
                if dets[i].class_id == dets[j].class_id {
                    assert!(dets[i].mask.intersection(&dets[j].mask).unwrap().is_empty());
                }
            }
        }
    }

    #[test]
    fn boundary_target_band() {
        let cfg = small_config();
        let square = BinaryMask::from_fn(64, 64, |x, y| (10..30).contains(&x) && (10..30).contains(&y));
        let t = boundary_target(&[(2, &square)], &cfg).unwrap();
        let band = t.labels.iter().filter(|&&l| l == 2).count();
        assert_eq!(band, 20 * 20 - 14 * 14);
        assert_eq!(t.get(10, 10), 2);
        assert_eq!(t.get(12, 20), 2);
        assert_eq!(t.get(13, 20), 0);
        assert_eq!(t.get(9, 20), 0);
        assert!(boundary_target(&[(3, &square)], &cfg).is_err());
    }
}
