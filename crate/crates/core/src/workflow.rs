//! Dataset-level helpers shared by the command-line tool and the tests.

use rayon::prelude::*;

use crate::backbone::{BackboneParams, TrainRecord};
use crate::error::Result;
use crate::imaging::BinaryMask;
use crate::metrics::{evaluate, EvalReport, ImageInfo, PredictedItem};
use crate::segmenter::{detect, training_record, Detection, PipelineConfig};
use crate::synthdata::Sample;

/// Network inputs and boundary targets for annotated samples.
pub fn training_records(samples: &[Sample], config: &PipelineConfig) -> Result<Vec<TrainRecord<f32>>> {
    samples
        .par_iter()
        .map(|s| {
            let items: Vec<(usize, &BinaryMask)> = s.truth.iter().map(|g| g.class_id).zip(&s.masks).collect();
            training_record(&s.image, &items, config)
        })
        .collect()
}

/// Detections for every sample, in sample order.
pub fn detect_samples(
    samples: &[Sample],
    params: &BackboneParams<f32>,
    config: &PipelineConfig,
) -> Result<Vec<Vec<Detection>>> {
    samples.par_iter().map(|s| detect(&s.image, params, config)).collect()
}

pub fn predicted_items(image_id: &str, detections: &[Detection]) -> Vec<PredictedItem> {
    detections
        .iter()
        .map(|d| PredictedItem {
            image_id: image_id.to_string(),
            class_id: d.class_id,
            score: d.score,
            aabb: d.aabb,
            mask: Some(d.mask.clone()),
        })
        .collect()
}

/// Score detections (one list per sample) against the samples' annotations.
pub fn evaluate_samples(
    samples: &[Sample],
    detections: &[Vec<Detection>],
    class_names: &[String],
    iou_threshold: f64,
) -> Result<EvalReport> {
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    let mut images: Vec<ImageInfo> = Vec::with_capacity(samples.len());
    for (s, d) in samples.iter().zip(detections) {
        preds.extend(predicted_items(&s.image_id, d));
        truth.extend(s.truth.iter().cloned());
        images.push(s.info());
    }
    evaluate(&preds, &truth, &images, class_names, iou_threshold)
}
