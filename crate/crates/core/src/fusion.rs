//! Accept/reject routing of instance proposals by their mean in-mask
//! semantic score.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{mean_score_in_mask, BinaryMask, BoundingBox, ScoreMap};

/// COCO category id for "person", the only class handled here.
pub const PERSON_CATEGORY: u32 = 1;

/// Operating point of the fusion filter.
pub const DEFAULT_THRESHOLD: f64 = 0.04;

/// One detected instance proposed by an instance-segmentation model.
#[derive(Debug, Clone, PartialEq)]
pub struct InstancePrediction {
    pub instance_id: u64,
    pub category: u32,
    confidence: f64,
    pub mask: BinaryMask,
}

impl InstancePrediction {
    pub fn new(instance_id: u64, category: u32, confidence: f64, mask: BinaryMask) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::RatioOutOfRange {
                field: "confidence",
                value: confidence,
            });
        }
        Ok(Self {
            instance_id,
            category,
            confidence,
            mask,
        })
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }

    pub fn bbox(&self) -> Option<BoundingBox> {
        self.mask.bbox()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmptyMaskPolicy {
    /// Zero-area proposals are routed to the rejected set.
    #[default]
    Reject,
    /// Zero-area proposals abort fusion with [`Error::EmptyMask`].
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    threshold: f64,
    pub empty_mask_policy: EmptyMaskPolicy,
}

impl FusionConfig {
    pub fn new(threshold: f64, empty_mask_policy: EmptyMaskPolicy) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::RatioOutOfRange {
                field: "threshold",
                value: threshold,
            });
        }
        Ok(Self {
            threshold,
            empty_mask_policy,
        })
    }

    pub fn with_threshold(threshold: f64) -> Result<Self> {
        Self::new(threshold, EmptyMaskPolicy::default())
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            empty_mask_policy: EmptyMaskPolicy::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejected {
    pub instance: InstancePrediction,
    /// `None` when the proposal had an empty mask.
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FusionResult {
    pub accepted: Vec<InstancePrediction>,
    pub rejected: Vec<Rejected>,
}

/// Mean semantic score inside each instance mask, `None` for empty masks.
pub fn instance_scores(instances: &[InstancePrediction], map: &ScoreMap) -> Result<Vec<Option<f64>>> {
    instances
        .par_iter()
        .map(|inst| match mean_score_in_mask(&inst.mask, map) {
            Ok(mean) => Ok(Some(mean)),
            Err(Error::EmptyMask) => Ok(None),
            Err(e) => Err(e),
        })
        .collect()
}

/// An instance survives when its mean in-mask score is at least the threshold.
pub fn accepts(mean_score: Option<f64>, threshold: f64) -> bool {
    mean_score.is_some_and(|m| m >= threshold)
}

/// Routes each instance to the accepted or rejected set, preserving input
/// order within each set.
pub fn fuse_instances(instances: &[InstancePrediction], map: &ScoreMap, cfg: &FusionConfig) -> Result<FusionResult> {
    let scores = instance_scores(instances, map)?;
    if cfg.empty_mask_policy == EmptyMaskPolicy::Error && scores.iter().any(Option::is_none) {
        return Err(Error::EmptyMask);
    }
    let mut result = FusionResult::default();
    for (inst, mean_score) in instances.iter().zip(scores) {
        if accepts(mean_score, cfg.threshold) {
            result.accepted.push(inst.clone());
        } else {
            result.rejected.push(Rejected {
                instance: inst.clone(),
                mean_score,
            });
        }
    }
    Ok(result)
}
