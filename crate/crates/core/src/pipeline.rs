//! End-to-end evaluation: load detections and score maps, fuse, and report
//! metrics before and after fusion.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{fuse_instances, FusionConfig, FusionResult};
use crate::io::detection::{load_detection_file, DetectionSet};
use crate::io::pgm::load_score_map;
use crate::mask::ScoreMap;
use crate::metrics::{evaluate, EvalImage, MetricsReport};

/// Score maps live at `<dir>/<image id>.pgm`.
pub fn score_map_path(dir: &Path, image_id: u64) -> PathBuf {
    dir.join(format!("{image_id}.pgm"))
}

/// Loads one score map per image, in image order, checking dimensions.
pub fn load_maps(dir: &Path, set: &DetectionSet) -> Result<Vec<ScoreMap>> {
    set.images
        .par_iter()
        .map(|info| {
            let path = score_map_path(dir, info.id);
            if !path.is_file() {
                return Err(Error::MissingScoreMap {
                    image_id: info.id,
                    path,
                });
            }
            let map = load_score_map(&path)?;
            if (map.width(), map.height()) != (info.width, info.height) {
                return Err(Error::InvalidFile {
                    path,
                    message: format!(
                        "score map is {}x{} but image {} is {}x{}",
                        map.width(),
                        map.height(),
                        info.id,
                        info.width,
                        info.height
                    ),
                });
            }
            Ok(map)
        })
        .collect()
}

/// Takes images and ground truth from `gts` and predictions from `preds`.
/// Every image referenced by `preds` must exist in `gts` with the same size.
pub fn merge_prediction_and_ground_truth(
    preds: DetectionSet,
    gts: DetectionSet,
    pred_path: &Path,
) -> Result<DetectionSet> {
    let slots: HashMap<u64, usize> = gts.images.iter().enumerate().map(|(i, info)| (info.id, i)).collect();
    let mut merged = gts;
    for entry in &mut merged.entries {
        entry.predictions.clear();
    }
    for (info, entry) in preds.images.into_iter().zip(preds.entries) {
        if entry.predictions.is_empty() {
            continue;
        }
        let Some(&slot) = slots.get(&info.id) else {
            return Err(Error::DanglingImageRef {
                path: pred_path.into(),
                image_id: info.id,
                instance_id: entry.predictions[0].instance_id,
            });
        };
        if merged.images[slot] != info {
            return Err(Error::InvalidFile {
                path: pred_path.into(),
                message: format!("image {} has a different size in the ground-truth file", info.id),
            });
        }
        merged.entries[slot].predictions = entry.predictions;
    }
    Ok(merged)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOutcome {
    pub unfused: MetricsReport,
    pub fused: MetricsReport,
    /// Fusion result per image, parallel to the input images.
    pub fusion: Vec<FusionResult>,
}

/// Fuses each image against its map. `maps` is parallel to `images`.
pub fn fuse_dataset(images: &[EvalImage], maps: &[ScoreMap], cfg: &FusionConfig) -> Result<Vec<FusionResult>> {
    if maps.len() != images.len() {
        return Err(Error::InvalidConfig(format!(
            "{} score maps for {} images",
            maps.len(),
            images.len()
        )));
    }
    images
        .par_iter()
        .zip(maps.par_iter())
        .map(|(img, map)| fuse_instances(&img.predictions, map, cfg))
        .collect()
}

pub fn fused_images(images: &[EvalImage], fusion: &[FusionResult]) -> Vec<EvalImage> {
    images
        .iter()
        .zip(fusion)
        .map(|(img, f)| EvalImage {
            image_id: img.image_id,
            predictions: f.accepted.clone(),
            ground_truths: img.ground_truths.clone(),
        })
        .collect()
}

pub fn evaluate_fusion(
    images: &[EvalImage],
    maps: &[ScoreMap],
    cfg: &FusionConfig,
    iou_threshold: f64,
) -> Result<EvalOutcome> {
    let fusion = fuse_dataset(images, maps, cfg)?;
    let unfused = evaluate(images, iou_threshold)?;
    let fused = evaluate(&fused_images(images, &fusion), iou_threshold)?;
    Ok(EvalOutcome { unfused, fused, fusion })
}

/// Loads predictions, ground truth and score maps from disk and evaluates
/// with and without fusion at threshold `c`.
pub fn run_eval_pipeline(
    pred_path: &Path,
    gt_path: &Path,
    maps_dir: &Path,
    c: f64,
    iou_threshold: f64,
) -> Result<EvalOutcome> {
    let cfg = FusionConfig::with_threshold(c)?;
    let preds = load_detection_file(pred_path)?;
    let gts = if gt_path == pred_path {
        preds.clone()
    } else {
        load_detection_file(gt_path)?
    };
    let set = merge_prediction_and_ground_truth(preds, gts, pred_path)?;
    let maps = load_maps(maps_dir, &set)?;
    evaluate_fusion(&set.entries, &maps, &cfg, iou_threshold)
}
