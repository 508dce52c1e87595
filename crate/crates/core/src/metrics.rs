//! Detection and segmentation scores: mask DC/IoU, box IoU, greedy matching,
//! all-points interpolated AP and mAP@0.5.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::imaging::{rasterize_polygon, Aabb, BinaryMask, Point};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    /// `Tp / (Tp + Fp + Fn)`; 1 when all counts are zero.
    pub fn iou(&self) -> f64 {
        let denom = self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            self.tp as f64 / denom as f64
        }
    }

    /// `2Tp / (2Tp + Fp + Fn)`; 1 when all counts are zero.
    pub fn dice(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    pub fn add(&mut self, other: ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Pixel counts of a prediction against a reference mask.
pub fn mask_counts(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    ensure!(
        pred.dims() == truth.dims(),
        InvalidInput,
        "mask sizes differ: {:?} vs {:?}",
        pred.dims(),
        truth.dims()
    );
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(mask_counts(a, b)?.iou())
}

pub fn mask_dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    Ok(mask_counts(a, b)?.dice())
}

/// Intersection over union of two axis-aligned boxes; 0 for an empty union.
pub fn box_iou(a: &Aabb, b: &Aabb) -> f64 {
    let iw = ((a.x + a.w).min(b.x + b.w) - a.x.max(b.x)).max(0.0);
    let ih = ((a.y + a.h).min(b.y + b.h) - a.y.max(b.y)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Annotated threat item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthItem {
    pub image_id: String,
    pub class_id: usize,
    pub aabb: Aabb,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<Point>>,
}

impl GroundTruthItem {
    /// Polygon rasterization, or the box itself when there is no polygon.
    pub fn mask(&self, width: usize, height: usize) -> BinaryMask {
        match &self.polygon {
            Some(p) => rasterize_polygon(p, width, height),
            None => rasterize_polygon(&box_polygon(&self.aabb), width, height),
        }
    }
}

/// Predicted item as consumed by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedItem {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub aabb: Aabb,
    /// Rasterized box when absent.
    pub mask: Option<BinaryMask>,
}

fn box_polygon(b: &Aabb) -> Vec<Point> {
    vec![(b.x, b.y), (b.x + b.w, b.y), (b.x + b.w, b.y + b.h), (b.x, b.y + b.h)]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchOutcome {
    /// One flag per detection, in input order: true for a true positive.
    pub flags: Vec<bool>,
    /// For each true positive, the index of the ground-truth item it claimed.
    pub matched_gt: Vec<Option<usize>>,
    pub unmatched_gt: usize,
}

/// Greedy matching in score order. Each detection claims the unmatched
/// ground-truth item of the same image and class with the highest box IoU,
/// provided that IoU is at least `iou_threshold`.
pub fn match_detections(
    detections: &[PredictedItem],
    truth: &[GroundTruthItem],
    iou_threshold: f64,
) -> Result<MatchOutcome> {
    ensure!(
        detections.windows(2).all(|w| w[0].score >= w[1].score),
        InvalidInput,
        "detections must be sorted by descending score"
    );
    ensure!(
        detections.iter().all(|d| d.score.is_finite()),
        NonFinite,
        "detection score is not finite"
    );
    let mut taken = vec![false; truth.len()];
    let mut flags = Vec::with_capacity(detections.len());
    let mut matched_gt = Vec::with_capacity(detections.len());
    for d in detections {
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in truth.iter().enumerate() {
            if taken[gi] || g.class_id != d.class_id || g.image_id != d.image_id {
                continue;
            }
            let iou = box_iou(&d.aabb, &g.aabb);
            if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            taken[gi] = true;
        }
        flags.push(best.is_some());
        matched_gt.push(best.map(|b| b.0));
    }
    Ok(MatchOutcome {
        flags,
        matched_gt,
        unmatched_gt: taken.iter().filter(|t| !**t).count(),
    })
}

/// `(recall, precision)` after each detection in score order.
pub fn pr_curve(flags: &[bool], total_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += f as usize;
            let recall = if total_gt == 0 { 0.0 } else { tp as f64 / total_gt as f64 };
            (recall, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

/// All-points interpolated AP: precision is replaced by its running maximum
/// from the right and integrated over recall. `None` without ground truth.
pub fn average_precision(flags: &[bool], total_gt: usize) -> Option<f64> {
    if total_gt == 0 {
        return None;
    }
    let curve = pr_curve(flags, total_gt);
    let mut envelope: Vec<f64> = curve.iter().map(|p| p.1).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (i, &(recall, _)) in curve.iter().enumerate() {
        if recall > prev_recall {
            ap += (recall - prev_recall) * envelope[i];
            prev_recall = recall;
        }
    }
    Some(ap)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: usize,
    pub name: String,
    pub ground_truth: usize,
    pub detections: usize,
    /// Absent for classes without ground truth.
    pub ap: Option<f64>,
    pub dc: Option<f64>,
    pub iou: Option<f64>,
    /// Detection-level counts at the IoU threshold.
    pub counts: ConfusionCounts,
    #[serde(skip)]
    pub pr: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub images: usize,
    pub classes: Vec<ClassReport>,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub mean_dc: f64,
    pub mean_iou: f64,
    pub counts: ConfusionCounts,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("cannot serialize report: {e}")))
    }

    /// `class,rank,recall,precision` rows for every class with ground truth.
    pub fn pr_csv(&self) -> String {
        let mut out = String::from("class,rank,recall,precision\n");
        for c in &self.classes {
            for (i, (r, p)) in c.pr.iter().enumerate() {
                let _ = writeln!(out, "{},{},{:.6},{:.6}", c.name, i + 1, r, p);
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    /// Human-readable summary table.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<12} {:>5} {:>5} {:>7} {:>7} {:>7}", "class", "gt", "det", "AP", "DC", "IoU");
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        for c in &self.classes {
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:>5} {:>7} {:>7} {:>7}",
                c.name,
                c.ground_truth,
                c.detections,
                fmt(c.ap),
                fmt(c.dc),
                fmt(c.iou)
            );
        }
        let _ = writeln!(
            out,
            "mAP@{:.2} {:.4}  mean DC {:.4}  mean IoU {:.4}",
            self.iou_threshold, self.map, self.mean_dc, self.mean_iou
        );
        out
    }
}

/// Score a set of predictions against ground truth.
///
/// `class_names[i]` names class id `i + 1`. Box AP uses greedy matching
/// over all images pooled per class. Mask DC and IoU compare, per image, the
/// union of predicted masks of a class with the union of its ground-truth
/// masks; they are averaged over the images where the class occurs in either,
/// then over classes with ground truth.
pub fn evaluate(
    predictions: &[PredictedItem],
    truth: &[GroundTruthItem],
    images: &[ImageInfo],
    class_names: &[String],
    iou_threshold: f64,
) -> Result<EvalReport> {
    ensure!(!truth.is_empty(), InvalidInput, "no ground truth to evaluate against");
    ensure!(
        (0.0..=1.0).contains(&iou_threshold),
        InvalidParameter,
        "IoU threshold must lie in [0, 1], got {iou_threshold}"
    );
    let dims: BTreeMap<&str, (usize, usize)> =
        images.iter().map(|i| (i.image_id.as_str(), (i.width, i.height))).collect();
    for id in predictions.iter().map(|p| &p.image_id).chain(truth.iter().map(|g| &g.image_id)) {
        ensure!(dims.contains_key(id.as_str()), InvalidInput, "unknown image id {id}");
    }
    let num_classes = class_names.len();
    for c in predictions.iter().map(|p| p.class_id).chain(truth.iter().map(|g| g.class_id)) {
        ensure!(
            (1..=num_classes).contains(&c),
            InvalidInput,
            "class id {c} outside 1..={num_classes}"
        );
    }

    let mut classes = Vec::with_capacity(num_classes);
    let mut totals = ConfusionCounts::default();
    for (ci, name) in class_names.iter().enumerate() {
        let class_id = ci + 1;
        let gts: Vec<GroundTruthItem> = truth.iter().filter(|g| g.class_id == class_id).cloned().collect();
        let mut dets: Vec<PredictedItem> =
            predictions.iter().filter(|p| p.class_id == class_id).cloned().collect();
        // ties are broken by image id, then by box, so image order is irrelevant
        dets.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.image_id.cmp(&b.image_id))
                .then_with(|| a.aabb.to_array().partial_cmp(&b.aabb.to_array()).unwrap_or(std::cmp::Ordering::Equal))
        });
        let outcome = match_detections(&dets, &gts, iou_threshold)?;
        let tp = outcome.flags.iter().filter(|f| **f).count() as u64;
        let counts = ConfusionCounts {
            tp,
            fp: dets.len() as u64 - tp,
            fn_: outcome.unmatched_gt as u64,
        };
        totals.add(counts);
        let ap = average_precision(&outcome.flags, gts.len());

        let (dc, iou) = if gts.is_empty() {
            (None, None)
        } else {
            let mut ids: Vec<&str> = gts.iter().map(|g| g.image_id.as_str()).collect();
            ids.extend(dets.iter().map(|d| d.image_id.as_str()));
            ids.sort_unstable();
            ids.dedup();
            let (mut dc_sum, mut iou_sum) = (0.0, 0.0);
            for id in &ids {
                let (w, h) = dims[id];
                let mut gt_union = BinaryMask::new(w, h);
                for g in gts.iter().filter(|g| g.image_id == *id) {
                    gt_union.union_in_place(&g.mask(w, h))?;
                }
                let mut pred_union = BinaryMask::new(w, h);
                for d in dets.iter().filter(|d| d.image_id == *id) {
                    match &d.mask {
                        Some(m) => pred_union.union_in_place(m)?,
                        None => pred_union.union_in_place(&rasterize_polygon(&box_polygon(&d.aabb), w, h))?,
                    }
                }
                let c = mask_counts(&pred_union, &gt_union)?;
                dc_sum += c.dice();
                iou_sum += c.iou();
            }
            (Some(dc_sum / ids.len() as f64), Some(iou_sum / ids.len() as f64))
        };
        classes.push(ClassReport {
            class_id,
            name: name.clone(),
            ground_truth: gts.len(),
            detections: dets.len(),
            ap,
            dc,
            iou,
            counts,
            pr: if gts.is_empty() { Vec::new() } else { pr_curve(&outcome.flags, gts.len()) },
        });
    }
    let scored: Vec<&ClassReport> = classes.iter().filter(|c| c.ap.is_some()).collect();
    let mean = |f: fn(&ClassReport) -> Option<f64>| {
        scored.iter().filter_map(|c| f(c)).sum::<f64>() / scored.len() as f64
    };
    Ok(EvalReport {
        iou_threshold,
        images: images.len(),
        map: mean(|c| c.ap),
        mean_dc: mean(|c| c.dc),
        mean_iou: mean(|c| c.iou),
        classes,
        counts: totals,
    })
}
