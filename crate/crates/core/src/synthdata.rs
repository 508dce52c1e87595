//! Pseudo X-ray scene generator.
//!
//! Scans are formed by multiplying the transmittance maps of translucent
//! shapes, so overlapping objects darken one another instead of hiding each
//! other, and adding clamped Gaussian noise.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imaging::io::{read_image, read_mask, write_image, write_mask};
use crate::imaging::{dilate, rasterize_polygon, Aabb, BinaryMask, ImageBuffer, Point, Shape};
use crate::metrics::{GroundTruthItem, ImageInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    Knife,
    Gun,
    Shuriken,
    Razor,
    Ellipse,
    Rect,
}

impl Template {
    pub const THREATS: [Template; 4] = [Template::Knife, Template::Gun, Template::Shuriken, Template::Razor];

    pub fn name(self) -> &'static str {
        match self {
            Template::Knife => "knife",
            Template::Gun => "gun",
            Template::Shuriken => "shuriken",
            Template::Razor => "razor",
            Template::Ellipse => "ellipse",
            Template::Rect => "rect",
        }
    }

    pub fn is_clutter(self) -> bool {
        matches!(self, Template::Ellipse | Template::Rect)
    }

    /// Outline in shape units, roughly spanning `[-0.5, 0.5]` along x.
    /// `aspect` sets the height of the clutter shapes relative to their width.
    pub fn outline(self, aspect: f64) -> Vec<Point> {
        match self {
            Template::Knife => vec![
                (0.5, 0.0),
                (-0.1, 0.1),
                (-0.1, 0.055),
                (-0.5, 0.055),
                (-0.5, -0.055),
                (-0.1, -0.055),
                (-0.1, -0.1),
            ],
            Template::Gun => vec![
                (-0.5, -0.25),
                (0.5, -0.25),
                (0.5, -0.07),
                (-0.2, -0.07),
                (-0.2, 0.35),
                (-0.45, 0.35),
                (-0.5, -0.07),
            ],
            Template::Shuriken => (0..8)
                .map(|i| {
                    let a = i as f64 * PI / 4.0;
                    let r = if i % 2 == 0 { 0.5 } else { 0.16 };
                    (r * a.cos(), r * a.sin())
                })
                .collect(),
            Template::Razor => vec![(-0.5, -0.17), (0.5, -0.17), (0.5, 0.17), (-0.5, 0.17)],
            Template::Ellipse => (0..40)
                .map(|i| {
                    let a = i as f64 * TAU / 40.0;
                    (0.5 * a.cos(), 0.5 * aspect * a.sin())
                })
                .collect(),
            Template::Rect => vec![
                (-0.5, -0.5 * aspect),
                (0.5, -0.5 * aspect),
                (0.5, 0.5 * aspect),
                (-0.5, 0.5 * aspect),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub center: Point,
    /// Radians, counter-clockwise in image coordinates.
    pub rotation: f64,
    /// Pixels per shape unit.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    /// `None` for clutter.
    pub class_id: Option<usize>,
    pub template: Template,
    pub pose: Pose,
    pub transmittance: f64,
    #[serde(default = "one")]
    pub aspect: f64,
}

fn one() -> f64 {
    1.0
}

impl ShapeSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.pose.scale > 0.0 && self.pose.scale.is_finite(),
            InvalidParameter,
            "shape scale must be positive, got {}",
            self.pose.scale
        );
        ensure!(
            self.transmittance > 0.0 && self.transmittance <= 1.0,
            InvalidParameter,
            "transmittance must lie in (0, 1], got {}",
            self.transmittance
        );
        ensure!(self.aspect > 0.0, InvalidParameter, "aspect must be positive");
        Ok(())
    }

    /// Outline in pixel coordinates.
    pub fn polygon(&self) -> Vec<Point> {
        let rot = self.pose.rotation.rem_euclid(TAU);
        let (c, s) = (rot.cos(), rot.sin());
        let (cx, cy) = self.pose.center;
        let k = self.pose.scale;
        self.template
            .outline(self.aspect)
            .into_iter()
            .map(|(x, y)| (cx + k * (c * x - s * y), cy + k * (s * x + c * y)))
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RenderedShape {
    /// 1 outside the shape, the shape's transmittance inside.
    pub transmittance: ImageBuffer,
    pub mask: BinaryMask,
    pub polygon: Vec<Point>,
}

pub fn render_shape(spec: &ShapeSpec, width: usize, height: usize) -> Result<RenderedShape> {
    spec.validate()?;
    let polygon = spec.polygon();
    let mask = rasterize_polygon(&polygon, width, height);
    ensure!(
        !mask.is_empty(),
        InvalidParameter,
        "{} at {:?} does not cover any pixel of the {width}x{height} canvas",
        spec.template.name(),
        spec.pose.center
    );
    let transmittance = ImageBuffer::from_fn(width, height, |x, y| {
        if mask.get(x, y) {
            spec.transmittance
        } else {
            1.0
        }
    });
    Ok(RenderedShape {
        transmittance,
        mask,
        polygon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub items: Vec<ShapeSpec>,
    /// Fraction of each threat's area the placement aimed to overlap.
    pub occlusion_level: f64,
    pub noise_sigma: f64,
    /// Seed of the noise field.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct Scan {
    pub image: ImageBuffer,
    pub truth: Vec<GroundTruthItem>,
    /// Mask of each ground-truth item, same order.
    pub masks: Vec<BinaryMask>,
}

/// Multiply all transmittance maps, add noise and clamp. Every threat item
/// becomes a ground-truth entry; clutter does not.
pub fn compose_scan(scene: &SceneSpec, image_id: &str) -> Result<Scan> {
    ensure!(
        scene.width > 0 && scene.height > 0,
        InvalidParameter,
        "canvas must be non-empty"
    );
    ensure!(
        (0.0..=1.0).contains(&scene.occlusion_level),
        InvalidParameter,
        "occlusion level must lie in [0, 1]"
    );
    ensure!(
        scene.noise_sigma >= 0.0 && scene.noise_sigma.is_finite(),
        InvalidParameter,
        "noise sigma must be non-negative"
    );
    let (w, h) = (scene.width, scene.height);
    let mut image = ImageBuffer::filled(w, h, 1.0);
    let mut truth = Vec::new();
    let mut masks = Vec::new();
    for item in &scene.items {
        let shape = render_shape(item, w, h)?;
        for (p, &t) in image.data_mut().iter_mut().zip(shape.transmittance.data()) {
            *p *= t;
        }
        if let Some(class_id) = item.class_id {
            truth.push(GroundTruthItem {
                image_id: image_id.to_string(),
                class_id,
                aabb: Aabb::envelope(&shape.polygon).expect("non-empty outline"),
                polygon: Some(shape.polygon),
            });
            masks.push(shape.mask);
        }
    }
    if scene.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
        let normal = Normal::new(0.0, scene.noise_sigma).expect("valid sigma");
        for p in image.data_mut() {
            *p = (*p + normal.sample(&mut rng)).clamp(0.0, 1.0);
        }
    }
    Ok(Scan { image, truth, masks })
}

/// Parameters of the random scene distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneTemplate {
    pub width: usize,
    pub height: usize,
    /// Threat template of each class; class ids are positions plus one.
    pub classes: Vec<Template>,
    pub threats_per_scan: (usize, usize),
    pub clutter_per_scan: (usize, usize),
    pub occlusion_level: f64,
    pub noise_sigma: f64,
    pub threat_scale: (f64, f64),
    pub threat_transmittance: (f64, f64),
    pub clutter_scale: (f64, f64),
    pub clutter_transmittance: (f64, f64),
    /// Minimum free space between threat items, in pixels.
    pub threat_gap: usize,
}

impl Default for SceneTemplate {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            classes: vec![Template::Knife, Template::Gun, Template::Shuriken],
            threats_per_scan: (1, 3),
            clutter_per_scan: (2, 5),
            occlusion_level: 0.0,
            noise_sigma: 0.02,
            threat_scale: (28.0, 44.0),
            threat_transmittance: (0.25, 0.45),
            clutter_scale: (16.0, 48.0),
            clutter_transmittance: (0.55, 0.85),
            threat_gap: 4,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 100;
const MAX_OCCLUDERS: usize = 3;

impl SceneTemplate {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.width >= 16 && self.height >= 16, InvalidConfig, "canvas must be at least 16x16");
        ensure!(!self.classes.is_empty(), InvalidConfig, "at least one threat class is required");
        ensure!(
            self.classes.iter().all(|t| !t.is_clutter()),
            InvalidConfig,
            "threat classes must use threat templates"
        );
        ensure!(
            (0.0..=1.0).contains(&self.occlusion_level),
            InvalidConfig,
            "occlusion level must lie in [0, 1], got {}",
            self.occlusion_level
        );
        ensure!(self.noise_sigma >= 0.0, InvalidConfig, "noise sigma must be non-negative");
        let ranges = [
            ("threat_scale", self.threat_scale),
            ("clutter_scale", self.clutter_scale),
            ("threat_transmittance", self.threat_transmittance),
            ("clutter_transmittance", self.clutter_transmittance),
        ];
        for (name, (lo, hi)) in ranges {
            ensure!(lo > 0.0 && lo <= hi, InvalidConfig, "{name} range is invalid");
        }
        ensure!(
            self.threat_transmittance.1 <= 1.0 && self.clutter_transmittance.1 <= 1.0,
            InvalidConfig,
            "transmittance cannot exceed 1"
        );
        ensure!(
            self.threats_per_scan.0 <= self.threats_per_scan.1 && self.clutter_per_scan.0 <= self.clutter_per_scan.1,
            InvalidConfig,
            "count ranges must be ordered"
        );
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|t| t.name().to_string()).collect()
    }

    /// Draw a scene. Threats are kept inside the canvas and apart from each
    /// other; occluders are then fitted to each threat's occlusion target by
    /// rejection sampling, and remaining clutter is placed away from threats.
    pub fn sample_scene(&self, rng: &mut ChaCha8Rng) -> Result<SceneSpec> {
        self.validate()?;
        let (w, h) = (self.width, self.height);
        let mut threats: Vec<(ShapeSpec, BinaryMask)> = Vec::new();
        let mut keep_out = BinaryMask::new(w, h);
        let n_threats = rng.random_range(self.threats_per_scan.0..=self.threats_per_scan.1);
        for _ in 0..n_threats {
            let class = rng.random_range(0..self.classes.len());
            for _ in 0..PLACEMENT_ATTEMPTS {
                let spec = ShapeSpec {
                    class_id: Some(class + 1),
                    template: self.classes[class],
                    pose: Pose {
                        center: (rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)),
                        rotation: rng.random_range(0.0..TAU),
                        scale: rng.random_range(self.threat_scale.0..=self.threat_scale.1),
                    },
                    transmittance: rng.random_range(self.threat_transmittance.0..=self.threat_transmittance.1),
                    aspect: 1.0,
                };
                let poly = spec.polygon();
                let inside = poly
                    .iter()
                    .all(|&(x, y)| x >= 2.0 && y >= 2.0 && x <= w as f64 - 2.0 && y <= h as f64 - 2.0);
                if !inside {
                    continue;
                }
                let mask = rasterize_polygon(&poly, w, h);
                if mask.is_empty() || overlaps(&mask, &keep_out) {
                    continue;
                }
                keep_out.union_in_place(&dilate(&mask, self.threat_gap.max(1), Shape::Square)?)?;
                threats.push((spec, mask));
                break;
            }
        }

        let mut clutter: Vec<ShapeSpec> = Vec::new();
        let mut covered: Vec<BinaryMask> = threats.iter().map(|(_, m)| BinaryMask::new(m.width(), m.height())).collect();
        if self.occlusion_level > 0.0 {
            for i in 0..threats.len() {
                for _ in 0..MAX_OCCLUDERS {
                    let current = fraction(&covered[i], &threats[i].1);
                    if (current - self.occlusion_level).abs() <= 0.05 || current > self.occlusion_level {
                        break;
                    }
                    let mut best: Option<(f64, ShapeSpec, BinaryMask)> = None;
                    for _ in 0..PLACEMENT_ATTEMPTS {
                        let spec = self.random_clutter(rng, Some(threats[i].0.pose));
                        let mask = rasterize_polygon(&spec.polygon(), w, h);
                        if mask.is_empty() {
                            continue;
                        }
                        let mut cost = 0.0;
                        for (j, (_, tm)) in threats.iter().enumerate() {
                            let before = fraction(&covered[j], tm);
                            let after = fraction(&covered[j].union(&mask)?, tm);
                            cost += if j == i {
                                (after - self.occlusion_level).abs()
                            } else {
                                (after - before).max(0.0)
                            };
                        }
                        if best.as_ref().is_none_or(|b| cost < b.0) {
                            best = Some((cost, spec, mask));
                        }
                    }
                    let Some((_, spec, mask)) = best else { break };
                    for c in covered.iter_mut() {
                        c.union_in_place(&mask)?;
                    }
                    clutter.push(spec);
                }
            }
        }

        let mut threat_union = BinaryMask::new(w, h);
        for (_, m) in &threats {
            threat_union.union_in_place(m)?;
        }
        let n_clutter = rng.random_range(self.clutter_per_scan.0..=self.clutter_per_scan.1);
        for _ in 0..n_clutter {
            for _ in 0..PLACEMENT_ATTEMPTS {
                let spec = self.random_clutter(rng, None);
                let mask = rasterize_polygon(&spec.polygon(), w, h);
                if !mask.is_empty() && !overlaps(&mask, &threat_union) {
                    clutter.push(spec);
                    break;
                }
            }
        }

        let mut items: Vec<ShapeSpec> = threats.into_iter().map(|t| t.0).collect();
        items.extend(clutter);
        Ok(SceneSpec {
            width: w,
            height: h,
            items,
            occlusion_level: self.occlusion_level,
            noise_sigma: self.noise_sigma,
            seed: rng.random(),
        })
    }

    fn random_clutter(&self, rng: &mut ChaCha8Rng, near: Option<Pose>) -> ShapeSpec {
        let template = if rng.random_bool(0.5) { Template::Ellipse } else { Template::Rect };
        let scale = rng.random_range(self.clutter_scale.0..=self.clutter_scale.1);
        let center = match near {
            Some(p) => {
                let r = 0.5 * (p.scale + scale);
                (
                    p.center.0 + rng.random_range(-r..r),
                    p.center.1 + rng.random_range(-r..r),
                )
            }
            None => (
                rng.random_range(0.0..self.width as f64),
                rng.random_range(0.0..self.height as f64),
            ),
        };
        ShapeSpec {
            class_id: None,
            template,
            pose: Pose {
                center,
                rotation: rng.random_range(0.0..PI),
                scale,
            },
            transmittance: rng.random_range(self.clutter_transmittance.0..=self.clutter_transmittance.1),
            aspect: rng.random_range(0.3..1.0),
        }
    }
}

fn overlaps(a: &BinaryMask, b: &BinaryMask) -> bool {
    a.bits().iter().zip(b.bits()).any(|(&x, &y)| x && y)
}

/// Share of `target` pixels that are also set in `cover`.
fn fraction(cover: &BinaryMask, target: &BinaryMask) -> f64 {
    let total = target.count();
    if total == 0 {
        return 0.0;
    }
    let hit = cover.bits().iter().zip(target.bits()).filter(|(&c, &t)| c && t).count();
    hit as f64 / total as f64
}

/// Fraction of a threat mask overlapped by the other shapes of its scene.
pub fn measured_occlusion(scene: &SceneSpec) -> Result<Vec<f64>> {
    let (w, h) = (scene.width, scene.height);
    let masks: Vec<BinaryMask> = scene
        .items
        .iter()
        .map(|s| rasterize_polygon(&s.polygon(), w, h))
        .collect();
    let mut out = Vec::new();
    for (i, item) in scene.items.iter().enumerate() {
        if item.class_id.is_none() {
            continue;
        }
        let mut others = BinaryMask::new(w, h);
        for (j, m) in masks.iter().enumerate() {
            if j != i {
                others.union_in_place(m)?;
            }
        }
        out.push(fraction(&others, &masks[i]));
    }
    Ok(out)
}

/// On-disk annotation of one scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub image_id: String,
    pub items: Vec<AnnotationItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationItem {
    pub class: String,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygon: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub count: usize,
    pub classes: Vec<String>,
    pub template: SceneTemplate,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Train share of a dataset split.
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

pub fn image_id(index: usize) -> String {
    format!("scan_{:05}", index + 1)
}

/// Number of training scans for `n` scans at the given train fraction.
pub fn train_count(n: usize, train_fraction: f64) -> usize {
    ((n as f64 * train_fraction).round() as usize).min(n)
}

/// Scene `index` of the dataset seeded by `seed`. Each scene reads its own
/// ChaCha stream, so scenes can be generated in any order.
pub fn dataset_scene(template: &SceneTemplate, seed: u64, index: usize) -> Result<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    template.sample_scene(&mut rng)
}

/// Write `n` scans with annotations, masks and a manifest under `out_dir`:
/// `images/<id>.png`, `annotations/<id>.json`, `masks/<id>_<k>.png` and
/// `manifest.json`. The first `round(n · train_fraction)` scans form the
/// training split.
pub fn generate_dataset(
    n: usize,
    template: &SceneTemplate,
    seed: u64,
    train_fraction: f64,
    out_dir: &Path,
) -> Result<Manifest> {
    ensure!(n >= 1, InvalidParameter, "dataset size must be at least 1");
    ensure!(
        (0.0..=1.0).contains(&train_fraction),
        InvalidParameter,
        "train fraction must lie in [0, 1]"
    );
    template.validate()?;
    for sub in ["images", "annotations", "masks"] {
        let dir = out_dir.join(sub);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let names = template.class_names();
    (0..n).into_par_iter().try_for_each(|i| -> Result<()> {
        let id = image_id(i);
        let scene = dataset_scene(template, seed, i)?;
        let scan = compose_scan(&scene, &id)?;
        write_image(&scan.image, out_dir.join("images").join(format!("{id}.png")))?;
        for (k, m) in scan.masks.iter().enumerate() {
            write_mask(m, out_dir.join("masks").join(format!("{id}_{k}.png")))?;
        }
        let ann = Annotation {
            image_id: id.clone(),
            items: scan
                .truth
                .iter()
                .map(|g| AnnotationItem {
                    class: names[g.class_id - 1].clone(),
                    bbox: g.aabb.to_array(),
                    polygon: g.polygon.iter().flatten().map(|&(x, y)| [x, y]).collect(),
                })
                .collect(),
        };
        write_json(&out_dir.join("annotations").join(format!("{id}.json")), &ann)
    })?;
    let n_train = train_count(n, train_fraction);
    let ids: Vec<String> = (0..n).map(image_id).collect();
    let manifest = Manifest {
        seed,
        count: n,
        classes: names,
        template: template.clone(),
        train: ids[..n_train].to_vec(),
        test: ids[n_train..].to_vec(),
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("cannot serialize {}: {e}", path.display())))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

/// A dataset directory in the generated layout. Directories without a
/// manifest are accepted too: every annotation becomes a test scan and the
/// class list is the sorted set of class names found.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub classes: Vec<String>,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub image_id: String,
    pub image: ImageBuffer,
    pub truth: Vec<GroundTruthItem>,
    /// Per-item masks: the stored mask when present, else the polygon (or
    /// box) rasterization.
    pub masks: Vec<BinaryMask>,
}

impl Sample {
    pub fn info(&self) -> ImageInfo {
        ImageInfo {
            image_id: self.image_id.clone(),
            width: self.image.width(),
            height: self.image.height(),
        }
    }
}

impl Dataset {
    pub fn open(root: &Path) -> Result<Self> {
        let manifest_path = root.join("manifest.json");
        if manifest_path.exists() {
            let m: Manifest = read_json(&manifest_path)?;
            return Ok(Self {
                root: root.to_path_buf(),
                classes: m.classes,
                train: m.train,
                test: m.test,
            });
        }
        let dir = root.join("annotations");
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut ids = Vec::new();
        let mut classes = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(&dir, e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let ann: Annotation = read_json(&path)?;
                classes.extend(ann.items.into_iter().map(|i| i.class));
                ids.push(ann.image_id);
            }
        }
        ensure!(!ids.is_empty(), InvalidInput, "no annotations found in {}", dir.display());
        ids.sort();
        classes.sort();
        classes.dedup();
        Ok(Self {
            root: root.to_path_buf(),
            classes,
            train: Vec::new(),
            test: ids,
        })
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name).map(|i| i + 1)
    }

    pub fn image_path(&self, id: &str) -> PathBuf {
        let png = self.root.join("images").join(format!("{id}.png"));
        if png.exists() {
            return png;
        }
        for ext in ["pgm", "ppm", "jpg", "jpeg"] {
            let p = self.root.join("images").join(format!("{id}.{ext}"));
            if p.exists() {
                return p;
            }
        }
        png
    }

    pub fn annotation(&self, id: &str) -> Result<Annotation> {
        read_json(&self.root.join("annotations").join(format!("{id}.json")))
    }

    pub fn load(&self, id: &str) -> Result<Sample> {
        let image = read_image(self.image_path(id))?;
        let ann = self.annotation(id)?;
        let (w, h) = image.dims();
        let mut truth = Vec::with_capacity(ann.items.len());
        let mut masks = Vec::with_capacity(ann.items.len());
        for (k, item) in ann.items.iter().enumerate() {
            let class_id = self.class_id(&item.class).ok_or_else(|| {
                Error::InvalidInput(format!("{id}: unknown class {:?}", item.class))
            })?;
            let [x, y, bw, bh] = item.bbox;
            ensure!(bw > 0.0 && bh > 0.0, InvalidInput, "{id}: item {k} has an empty box");
            let polygon = (!item.polygon.is_empty())
                .then(|| item.polygon.iter().map(|p| (p[0], p[1])).collect::<Vec<Point>>());
            let g = GroundTruthItem {
                image_id: id.to_string(),
                class_id,
                aabb: Aabb::new(x, y, bw, bh),
                polygon,
            };
            let mask_path = self.root.join("masks").join(format!("{id}_{k}.png"));
            let mask = if mask_path.exists() {
                let m = read_mask(&mask_path)?;
                ensure!(m.dims() == (w, h), InvalidInput, "{}: mask size differs from image", mask_path.display());
                m
            } else {
                g.mask(w, h)
            };
            truth.push(g);
            masks.push(mask);
        }
        Ok(Sample {
            image_id: id.to_string(),
            image,
            truth,
            masks,
        })
    }

    pub fn load_split(&self, ids: &[String]) -> Result<Vec<Sample>> {
        ids.par_iter().map(|id| self.load(id)).collect()
    }
}
