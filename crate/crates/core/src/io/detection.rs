//! JSON detection files holding images, predictions and ground truth.
//!
//! ```json
//! {
//!   "images": [{"id": 0, "width": 4, "height": 3}],
//!   "annotations": [
//!     {"image_id": 0, "instance_id": 7, "category_id": 1, "confidence": 0.9,
//!      "segmentation": {"counts": [2, 3, 7], "size": [3, 4]}}
//!   ]
//! }
//! ```
//!
//! Annotations carrying `confidence` are predictions; those without it are
//! ground truth. `size` is `[height, width]` and `counts` is the column-major,
//! zeros-first run-length encoding used throughout the crate.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::InstancePrediction;
use crate::mask::{BinaryMask, RunLengthEncoding};
use crate::metrics::{EvalImage, GroundTruthInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
}

/// Validated contents of a detection file, one entry per image in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub images: Vec<ImageInfo>,
    /// Parallel to `images`.
    pub entries: Vec<EvalImage>,
}

impl DetectionSet {
    pub fn push(&mut self, info: ImageInfo, entry: EvalImage) {
        debug_assert_eq!(info.id, entry.image_id);
        self.images.push(info);
        self.entries.push(entry);
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageInfo, &EvalImage)> {
        self.images.iter().zip(&self.entries)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    images: Vec<ImageInfo>,
    annotations: Vec<RawAnnotation>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    image_id: u64,
    instance_id: u64,
    category_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confidence: Option<f64>,
    segmentation: RawSegmentation,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegmentation {
    counts: Vec<i64>,
    size: [u32; 2],
}

pub fn load_detection_file(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_detection_file(&text, path)
}

/// Parses and validates detection JSON; `path` is used for error context.
pub fn parse_detection_file(text: &str, path: &Path) -> Result<DetectionSet> {
    let raw: RawFile = serde_json::from_str(text).map_err(|e| {
        // The position is reported separately.
        let mut message = e.to_string();
        if let Some(at) = message.rfind(" at line ") {
            message.truncate(at);
        }
        Error::Parse {
            path: path.into(),
            line: e.line(),
            column: e.column(),
            message,
        }
    })?;
    let invalid = |message: String| Error::InvalidFile {
        path: path.into(),
        message,
    };

    let mut index: HashMap<u64, usize> = HashMap::new();
    let mut set = DetectionSet::default();
    for info in &raw.images {
        if info.width == 0 || info.height == 0 {
            return Err(invalid(format!("image {} has a zero dimension", info.id)));
        }
        if index.insert(info.id, set.len()).is_some() {
            return Err(invalid(format!("duplicate image id {}", info.id)));
        }
        set.push(
            *info,
            EvalImage {
                image_id: info.id,
                ..EvalImage::default()
            },
        );
    }

    let mut seen_preds: HashSet<(u64, u64)> = HashSet::new();
    let mut seen_gts: HashSet<(u64, u64)> = HashSet::new();
    for ann in raw.annotations {
        let (image_id, instance_id) = (ann.image_id, ann.instance_id);
        let Some(&slot) = index.get(&image_id) else {
            return Err(Error::DanglingImageRef {
                path: path.into(),
                image_id,
                instance_id,
            });
        };
        let info = set.images[slot];
        let context = |msg: String| invalid(format!("annotation {instance_id} on image {image_id}: {msg}"));
        let [h, w] = ann.segmentation.size;
        if (w, h) != (info.width, info.height) {
            return Err(context(format!(
                "segmentation size [{h}, {w}] does not match image [{}, {}]",
                info.height, info.width
            )));
        }
        let rle = RunLengthEncoding::from_signed(&ann.segmentation.counts).map_err(|e| context(e.to_string()))?;
        let mask = BinaryMask::from_rle(w, h, rle).map_err(|e| match e {
            Error::LengthMismatch { .. } => Error::RleLengthMismatch {
                path: path.into(),
                image_id,
                instance_id,
                source: Box::new(e),
            },
            other => context(other.to_string()),
        })?;
        let entry = &mut set.entries[slot];
        match ann.confidence {
            Some(conf) => {
                if !seen_preds.insert((image_id, instance_id)) {
                    return Err(context("duplicate prediction id".into()));
                }
                let pred = InstancePrediction::new(instance_id, ann.category_id, conf, mask)
                    .map_err(|e| context(e.to_string()))?;
                entry.predictions.push(pred);
            }
            None => {
                if !seen_gts.insert((image_id, instance_id)) {
                    return Err(context("duplicate ground-truth id".into()));
                }
                let gt = GroundTruthInstance::new(instance_id, ann.category_id, image_id, mask)
                    .map_err(|e| context(e.to_string()))?;
                entry.ground_truths.push(gt);
            }
        }
    }
    Ok(set)
}

/// Serializes `set`: images in order, then per image its predictions followed
/// by its ground truth.
pub fn detection_file_json(set: &DetectionSet) -> String {
    let mut annotations = Vec::new();
    for (info, entry) in set.iter() {
        let seg = |mask: &BinaryMask| RawSegmentation {
            counts: mask.rle().counts().iter().map(|&c| i64::from(c)).collect(),
            size: [info.height, info.width],
        };
        for p in &entry.predictions {
            annotations.push(RawAnnotation {
                image_id: info.id,
                instance_id: p.instance_id,
                category_id: p.category,
                confidence: Some(p.confidence()),
                segmentation: seg(&p.mask),
            });
        }
        for g in &entry.ground_truths {
            annotations.push(RawAnnotation {
                image_id: info.id,
                instance_id: g.gt_id,
                category_id: g.category,
                confidence: None,
                segmentation: seg(g.mask()),
            });
        }
    }
    let raw = RawFile {
        images: set.images.clone(),
        annotations,
    };
    let mut text = serde_json::to_string_pretty(&raw).expect("detection file serializes");
    text.push('\n');
    text
}

pub fn save_detection_file(set: &DetectionSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, detection_file_json(set)).map_err(|e| Error::io(path, e))
}
