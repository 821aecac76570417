//! Prediction-to-ground-truth matching and the detection metrics built on it:
//! TP/FP/FN counts, precision and recall, the precision-recall curve with
//! 101-point interpolated AP, average recall over IoU thresholds, and the
//! miss-rate versus false-positives-per-image curve.

use std::ops::{Add, AddAssign};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::InstancePrediction;
use crate::mask::{mask_iou, BinaryMask};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// IoU thresholds averaged by [`average_recall`]: 0.50, 0.55, ..., 0.95.
pub fn recall_iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthInstance {
    pub gt_id: u64,
    pub category: u32,
    pub image_id: u64,
    mask: BinaryMask,
}

impl GroundTruthInstance {
    pub fn new(gt_id: u64, category: u32, image_id: u64, mask: BinaryMask) -> Result<Self> {
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        Ok(Self {
            gt_id,
            category,
            image_id,
            mask,
        })
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.mask
    }
}

/// Predictions and ground truth for one image.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalImage {
    pub image_id: u64,
    pub predictions: Vec<InstancePrediction>,
    pub ground_truths: Vec<GroundTruthInstance>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    /// Index into the prediction list.
    pub prediction: usize,
    /// Index into the ground-truth list.
    pub ground_truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub matches: Vec<Match>,
    /// Indices of unmatched predictions, in input order.
    pub false_positives: Vec<usize>,
    /// Indices of unmatched ground truths, in input order.
    pub false_negatives: Vec<usize>,
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts {
            tp: self.matches.len() as u64,
            fp: self.false_positives.len() as u64,
            fn_: self.false_negatives.len() as u64,
        }
    }
}

/// Integer detection counts; `fn_` is the number of false negatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Counts {
    /// `tp / (tp + fp)`, or 1.0 when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp)
    }

    /// `tp / (tp + fn)`, or 1.0 when there is no ground truth.
    pub fn recall(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_)
    }

    /// Always `1 - recall`, so the two curves agree bit for bit.
    pub fn miss_rate(&self) -> f64 {
        1.0 - self.recall()
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, rhs: Counts) -> Counts {
        Counts {
            tp: self.tp + rhs.tp,
            fp: self.fp + rhs.fp,
            fn_: self.fn_ + rhs.fn_,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, rhs: Counts) {
        *self = *self + rhs;
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub x: f64,
    pub y: f64,
    /// Confidence cut that produced the point.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    pub ar: f64,
    /// (recall, precision) per confidence threshold, highest threshold first.
    pub pr_curve: Vec<CurvePoint>,
    /// (false positives per image, miss rate) per confidence threshold.
    pub mr_fppi_curve: Vec<CurvePoint>,
}

fn check_iou_threshold(iou_threshold: f64) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::RatioOutOfRange {
            field: "iou_threshold",
            value: iou_threshold,
        });
    }
    Ok(())
}

/// Prediction indices ordered by descending confidence, ties by instance id.
pub fn confidence_order(preds: &[InstancePrediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence()
            .total_cmp(&preds[a].confidence())
            .then_with(|| preds[a].instance_id.cmp(&preds[b].instance_id))
    });
    order
}

/// Greedy one-to-one matching: in confidence order, each prediction claims the
/// still-unmatched ground truth with the highest IoU at or above
/// `iou_threshold` (the earliest listed one on ties).
pub fn match_detections(
    preds: &[InstancePrediction],
    gts: &[GroundTruthInstance],
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_iou_threshold(iou_threshold)?;
    let ious = iou_matrix(preds, gts)?;
    Ok(greedy_match(preds, gts.len(), &ious, iou_threshold))
}

fn iou_matrix(preds: &[InstancePrediction], gts: &[GroundTruthInstance]) -> Result<Vec<Vec<f64>>> {
    preds
        .iter()
        .map(|p| gts.iter().map(|g| mask_iou(&p.mask, &g.mask)).collect())
        .collect()
}

fn greedy_match(preds: &[InstancePrediction], gt_count: usize, ious: &[Vec<f64>], iou_threshold: f64) -> MatchResult {
    let mut gt_taken = vec![false; gt_count];
    let mut pred_matched = vec![false; preds.len()];
    let mut matches = Vec::new();
    for p in confidence_order(preds) {
        let mut best: Option<(usize, f64)> = None;
        for (g, &iou) in ious[p].iter().enumerate() {
            if gt_taken[g] || iou < iou_threshold {
                continue;
            }
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, iou)) = best {
            gt_taken[g] = true;
            pred_matched[p] = true;
            matches.push(Match {
                prediction: p,
                ground_truth: g,
                iou,
            });
        }
    }
    MatchResult {
        matches,
        false_positives: (0..preds.len()).filter(|&p| !pred_matched[p]).collect(),
        false_negatives: (0..gt_count).filter(|&g| !gt_taken[g]).collect(),
    }
}

/// Counts, precision and recall of a single match result; AP, AR and the
/// curves are left empty.
pub fn summary_metrics(result: &MatchResult) -> MetricsReport {
    report_from_counts(result.counts())
}

pub fn report_from_counts(counts: Counts) -> MetricsReport {
    MetricsReport {
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        ..MetricsReport::default()
    }
}

/// Cumulative counts at every distinct confidence, highest confidence first.
///
/// Greedy matching in confidence order means the result at cut `t` is the
/// full matching restricted to predictions with confidence >= `t`, so one
/// matching pass per image suffices.
fn threshold_counts(images: &[EvalImage], iou_threshold: f64) -> Result<Vec<(f64, Counts)>> {
    check_iou_threshold(iou_threshold)?;
    let per_image: Vec<(Vec<(f64, bool)>, u64)> = images
        .par_iter()
        .map(|img| {
            let result = match_detections(&img.predictions, &img.ground_truths, iou_threshold)?;
            let mut matched = vec![false; img.predictions.len()];
            for m in &result.matches {
                matched[m.prediction] = true;
            }
            let scored = img
                .predictions
                .iter()
                .zip(matched)
                .map(|(p, hit)| (p.confidence(), hit))
                .collect();
            Ok((scored, img.ground_truths.len() as u64))
        })
        .collect::<Result<_>>()?;

    let total_gt: u64 = per_image.iter().map(|(_, n)| n).sum();
    let mut scored: Vec<(f64, bool)> = per_image.into_iter().flat_map(|(s, _)| s).collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut out: Vec<(f64, Counts)> = Vec::new();
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < scored.len() {
        let t = scored[i].0;
        while i < scored.len() && scored[i].0 == t {
            if scored[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((
            t,
            Counts {
                tp,
                fp,
                fn_: total_gt - tp,
            },
        ));
    }
    Ok(out)
}

/// Precision-recall points, one per distinct prediction confidence, ordered
/// from the highest threshold down.
pub fn pr_curve(images: &[EvalImage], iou_threshold: f64) -> Result<Vec<CurvePoint>> {
    Ok(threshold_counts(images, iou_threshold)?
        .into_iter()
        .map(|(threshold, c)| CurvePoint {
            x: c.recall(),
            y: c.precision(),
            threshold,
        })
        .collect())
}

/// 101-point interpolated average precision over a curve of
/// (recall, precision) points.
pub fn average_precision(curve: &[CurvePoint]) -> f64 {
    if curve.is_empty() {
        return 0.0;
    }
    // Suffix maximum of precision over points sorted by recall.
    let mut pts: Vec<(f64, f64)> = curve.iter().map(|p| (p.x, p.y)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    for i in (0..pts.len().saturating_sub(1)).rev() {
        pts[i].1 = pts[i].1.max(pts[i + 1].1);
    }
    let mut sum = 0.0;
    let mut j = 0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        while j < pts.len() && pts[j].0 < r {
            j += 1;
        }
        if j < pts.len() {
            sum += pts[j].1;
        }
    }
    sum / 101.0
}

/// Miss rate against false positives per image, one point per distinct
/// confidence, highest threshold first. A prediction-free input yields the
/// single point (0, miss rate) at threshold 1.0.
pub fn miss_rate_fppi_curve(images: &[EvalImage], iou_threshold: f64, image_count: usize) -> Result<Vec<CurvePoint>> {
    if image_count == 0 {
        return Err(Error::ZeroImages);
    }
    let per_cut = threshold_counts(images, iou_threshold)?;
    if per_cut.is_empty() {
        let gt: u64 = images.iter().map(|i| i.ground_truths.len() as u64).sum();
        let c = Counts { tp: 0, fp: 0, fn_: gt };
        return Ok(vec![CurvePoint {
            x: 0.0,
            y: c.miss_rate(),
            threshold: 1.0,
        }]);
    }
    Ok(per_cut
        .into_iter()
        .map(|(threshold, c)| CurvePoint {
            x: c.fp as f64 / image_count as f64,
            y: c.miss_rate(),
            threshold,
        })
        .collect())
}

/// Total counts with every prediction retained.
pub fn total_counts(images: &[EvalImage], iou_threshold: f64) -> Result<Counts> {
    check_iou_threshold(iou_threshold)?;
    images
        .par_iter()
        .map(|img| match_detections(&img.predictions, &img.ground_truths, iou_threshold).map(|r| r.counts()))
        .try_reduce(Counts::default, |a, b| Ok(a + b))
}

/// Mean recall over IoU thresholds 0.50:0.05:0.95 with all predictions kept.
pub fn average_recall(images: &[EvalImage]) -> Result<f64> {
    let ious: Vec<Vec<Vec<f64>>> = images
        .par_iter()
        .map(|img| iou_matrix(&img.predictions, &img.ground_truths))
        .collect::<Result<_>>()?;
    let thresholds = recall_iou_thresholds();
    let sum: f64 = thresholds
        .iter()
        .map(|&t| {
            images
                .iter()
                .zip(&ious)
                .map(|(img, m)| greedy_match(&img.predictions, img.ground_truths.len(), m, t).counts())
                .sum::<Counts>()
                .recall()
        })
        .sum();
    Ok(sum / thresholds.len() as f64)
}

/// Full report: counts at all predictions, both curves, AP and AR.
pub fn evaluate(images: &[EvalImage], iou_threshold: f64) -> Result<MetricsReport> {
    let counts = total_counts(images, iou_threshold)?;
    let pr = pr_curve(images, iou_threshold)?;
    let mr = miss_rate_fppi_curve(images, iou_threshold, images.len().max(1))?;
    Ok(MetricsReport {
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
        ap: average_precision(&pr),
        ar: average_recall(images)?,
        pr_curve: pr,
        mr_fppi_curve: mr,
    })
}
