//! Per-image prediction files written by `infer` and read by `eval`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tst_core::imaging::io::{read_mask, write_mask, RgbCanvas};
use tst_core::imaging::Aabb;
use tst_core::metrics::PredictedItem;
use tst_core::segmenter::Detection;
use tst_core::{Error, ImageBuffer, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RboxJson {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionJson {
    pub class: String,
    pub score: f64,
    pub aabb: [f64; 4],
    pub rbox: RboxJson,
    /// Mask PNG, relative to the prediction file.
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub detections: Vec<DetectionJson>,
}

const PALETTE: [[u8; 3]; 6] = [
    [230, 60, 50],
    [40, 160, 70],
    [50, 110, 230],
    [230, 170, 30],
    [170, 60, 200],
    [30, 190, 200],
];

/// Write `<name>.json`, one mask PNG per detection and `<name>_overlay.png`.
pub fn write_predictions(
    out_dir: &Path,
    name: &str,
    scan: &ImageBuffer,
    detections: &[Detection],
    class_names: &[String],
) -> Result<()> {
    let mut canvas = RgbCanvas::from_gray(&scan.to_luminance());
    let mut items = Vec::with_capacity(detections.len());
    for (i, d) in detections.iter().enumerate() {
        let mask_name = format!("{name}_mask{i}.png");
        write_mask(&d.mask, out_dir.join(&mask_name))?;
        let color = PALETTE[(d.class_id - 1) % PALETTE.len()];
        canvas.blend_mask(&d.mask, color, 0.35);
        canvas.draw_polygon(&d.rbox.corners(), color);
        items.push(DetectionJson {
            class: class_names[d.class_id - 1].clone(),
            score: d.score,
            aabb: d.aabb.to_array(),
            rbox: RboxJson {
                cx: d.rbox.center.0,
                cy: d.rbox.center.1,
                w: d.rbox.size.0,
                h: d.rbox.size.1,
                angle_deg: d.rbox.angle.to_degrees(),
            },
            mask: mask_name,
        });
    }
    canvas.save(out_dir.join(format!("{name}_overlay.png")))?;
    let file = PredictionFile {
        image_id: name.to_string(),
        width: scan.width(),
        height: scan.height(),
        detections: items,
    };
    let path = out_dir.join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(&file).expect("predictions serialize");
    std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })
}

/// Read a prediction file; detections with a class outside `class_names` are
/// an error.
pub fn read_predictions(path: &Path, class_names: &[String]) -> Result<(PredictionFile, Vec<PredictedItem>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let file: PredictionFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut items = Vec::with_capacity(file.detections.len());
    for d in &file.detections {
        let class_id = class_names
            .iter()
            .position(|c| *c == d.class)
            .ok_or_else(|| Error::InvalidInput(format!("{}: unknown class {:?}", path.display(), d.class)))?
            + 1;
        let mask = if d.mask.is_empty() {
            None
        } else {
            Some(read_mask(dir.join(&d.mask))?)
        };
        let [x, y, w, h] = d.aabb;
        items.push(PredictedItem {
            image_id: file.image_id.clone(),
            class_id,
            score: d.score,
            aabb: Aabb::new(x, y, w, h),
            mask,
        });
    }
    Ok((file, items))
}
