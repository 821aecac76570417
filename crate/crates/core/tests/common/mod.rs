//! Test-only brute-force oracles and random case generators. Nothing here
//! calls into the metric implementations under test: IoU is counted pixel by
//! pixel on decoded bitmaps, matching is re-run from scratch at every
//! threshold, and AP/AR are evaluated straight from their definitions.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use segfuse::fusion::PERSON_CATEGORY;
use segfuse::mask::{BinaryMask, Bitmap};
use segfuse::metrics::{EvalImage, GroundTruthInstance};
use segfuse::InstancePrediction;

pub const MICRO_W: u32 = 12;
pub const MICRO_H: u32 = 10;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn random_rect(rng: &mut StdRng) -> (u32, u32, u32, u32) {
    let w = rng.random_range(1..=6);
    let h = rng.random_range(1..=6);
    let x = rng.random_range(0..=MICRO_W - w);
    let y = rng.random_range(0..=MICRO_H - h);
    (x, y, w, h)
}

fn jitter(rng: &mut StdRng, (x, y, w, h): (u32, u32, u32, u32)) -> (u32, u32, u32, u32) {
    let dx: i32 = rng.random_range(-1..=1);
    let dy: i32 = rng.random_range(-1..=1);
    let nx = (x as i32 + dx).clamp(0, MICRO_W as i32 - 1) as u32;
    let ny = (y as i32 + dy).clamp(0, MICRO_H as i32 - 1) as u32;
    let nw = (w as i32 + rng.random_range(-1..=1)).max(1) as u32;
    let nh = (h as i32 + rng.random_range(-1..=1)).max(1) as u32;
    (nx, ny, nw, nh)
}

/// A handful of images totalling at most 10 predictions and 5 ground truths.
/// Predictions are often jittered copies of ground truth so matches happen,
/// and confidences come from a coarse grid so ties occur.
pub fn micro_case(seed: u64) -> Vec<EvalImage> {
    let mut rng = rng(seed);
    let images = rng.random_range(1..=3);
    let mut preds_left = rng.random_range(0..=10u32);
    let mut gts_left = rng.random_range(0..=5u32);
    let mut out = Vec::new();
    let mut next_id = 0u64;
    for image_id in 0..images {
        let last = image_id + 1 == images;
        let n_gt = if last { gts_left } else { rng.random_range(0..=gts_left) };
        let n_pred = if last {
            preds_left
        } else {
            rng.random_range(0..=preds_left)
        };
        gts_left -= n_gt;
        preds_left -= n_pred;
        let gt_rects: Vec<_> = (0..n_gt).map(|_| random_rect(&mut rng)).collect();
        let ground_truths = gt_rects
            .iter()
            .enumerate()
            .map(|(i, &(x, y, w, h))| {
                GroundTruthInstance::new(
                    i as u64,
                    PERSON_CATEGORY,
                    image_id as u64,
                    BinaryMask::from_rect(MICRO_W, MICRO_H, x, y, w, h),
                )
                .unwrap()
            })
            .collect();
        let predictions = (0..n_pred)
            .map(|_| {
                let r = if !gt_rects.is_empty() && rng.random_bool(0.7) {
                    let base = gt_rects[rng.random_range(0..gt_rects.len())];
                    if rng.random_bool(0.3) {
                        base
                    } else {
                        jitter(&mut rng, base)
                    }
                } else {
                    random_rect(&mut rng)
                };
                let conf = rng.random_range(1..=9) as f64 / 10.0;
                let id = next_id;
                next_id += 1;
                InstancePrediction::new(
                    id,
                    PERSON_CATEGORY,
                    conf,
                    BinaryMask::from_rect(MICRO_W, MICRO_H, r.0, r.1, r.2, r.3),
                )
                .unwrap()
            })
            .collect();
        out.push(EvalImage {
            image_id: image_id as u64,
            predictions,
            ground_truths,
        });
    }
    out
}

pub fn pixel_iou(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (ab, bb): (Bitmap, Bitmap) = (a.to_bitmap(), b.to_bitmap());
    let mut inter = 0u32;
    let mut union = 0u32;
    for (&p, &q) in ab.bits().iter().zip(bb.bits()) {
        inter += u32::from(p && q);
        union += u32::from(p || q);
    }
    if union == 0 {
        0.0
    } else {
        f64::from(inter) / f64::from(union)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OracleCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl OracleCounts {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }

    /// Miss rate straight from counts, `fn / (tp + fn)`.
    pub fn miss_rate(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            0.0
        } else {
            self.fn_ as f64 / (self.tp + self.fn_) as f64
        }
    }
}

/// Exhaustive search over all one-to-one assignments with IoU at or above
/// `thr`, returning the matched (prediction, gt) pairs of the assignment whose
/// IoU vector, read in confidence order (desc, ties by id), is
/// lexicographically largest; unmatched counts below every valid IoU and
/// among equal vectors the lower GT index wins. This is the greedy rule's
/// fixed point, found without greedy.
pub fn exhaustive_match(preds: &[InstancePrediction], gts: &[GroundTruthInstance], thr: f64) -> Vec<(usize, usize)> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .confidence()
            .partial_cmp(&preds[a].confidence())
            .unwrap()
            .then(preds[a].instance_id.cmp(&preds[b].instance_id))
    });
    let iou: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| gts.iter().map(|g| pixel_iou(&p.mask, g.mask())).collect())
        .collect();

    // Key per prediction: (iou or -1, -gt_index) so bigger is better.
    type Key = Vec<(f64, i64)>;
    fn better(a: &Key, b: &Key) -> bool {
        for (x, y) in a.iter().zip(b) {
            if x.0 != y.0 {
                return x.0 > y.0;
            }
            if x.1 != y.1 {
                return x.1 > y.1;
            }
        }
        false
    }
    #[allow(clippy::too_many_arguments)]
    fn search(
        k: usize,
        order: &[usize],
        iou: &[Vec<f64>],
        thr: f64,
        taken: &mut Vec<bool>,
        key: &mut Key,
        pairs: &mut Vec<(usize, usize)>,
        best: &mut Option<(Key, Vec<(usize, usize)>)>,
    ) {
        if k == order.len() {
            if best.as_ref().is_none_or(|(bk, _)| better(key, bk)) {
                *best = Some((key.clone(), pairs.clone()));
            }
            return;
        }
        let p = order[k];
        for g in 0..taken.len() {
            if !taken[g] && iou[p][g] >= thr {
                taken[g] = true;
                key.push((iou[p][g], -(g as i64)));
                pairs.push((p, g));
                search(k + 1, order, iou, thr, taken, key, pairs, best);
                pairs.pop();
                key.pop();
                taken[g] = false;
            }
        }
        key.push((-1.0, 0));
        search(k + 1, order, iou, thr, taken, key, pairs, best);
        key.pop();
    }
    let mut best = None;
    search(
        0,
        &order,
        &iou,
        thr,
        &mut vec![false; gts.len()],
        &mut Vec::new(),
        &mut Vec::new(),
        &mut best,
    );
    let mut pairs = best.map(|(_, p)| p).unwrap_or_default();
    pairs.sort();
    pairs
}

/// Greedy matching restated from its definition, with pixel-counted IoU.
pub fn oracle_counts(preds: &[&InstancePrediction], gts: &[GroundTruthInstance], thr: f64) -> OracleCounts {
    let mut remaining: Vec<&InstancePrediction> = preds.to_vec();
    let mut taken = vec![false; gts.len()];
    let mut tp = 0;
    while !remaining.is_empty() {
        // Pick the highest-confidence prediction, lowest id on ties.
        let mut pick = 0;
        for i in 1..remaining.len() {
            let (a, b) = (remaining[i], remaining[pick]);
            if a.confidence() > b.confidence() || (a.confidence() == b.confidence() && a.instance_id < b.instance_id) {
                pick = i;
            }
        }
        let p = remaining.remove(pick);
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            let iou = pixel_iou(&p.mask, gt.mask());
            if !taken[g] && iou >= thr && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            taken[g] = true;
            tp += 1;
        }
    }
    OracleCounts {
        tp,
        fp: preds.len() as u64 - tp,
        fn_: gts.len() as u64 - tp,
    }
}

/// Counts summed over images keeping predictions with confidence >= `t`.
pub fn oracle_counts_at(images: &[EvalImage], t: f64, thr: f64) -> OracleCounts {
    let mut total = OracleCounts::default();
    for img in images {
        let kept: Vec<&InstancePrediction> = img.predictions.iter().filter(|p| p.confidence() >= t).collect();
        let c = oracle_counts(&kept, &img.ground_truths, thr);
        total.tp += c.tp;
        total.fp += c.fp;
        total.fn_ += c.fn_;
    }
    total
}

/// Distinct confidences, descending.
pub fn oracle_thresholds(images: &[EvalImage]) -> Vec<f64> {
    let mut t: Vec<f64> = images
        .iter()
        .flat_map(|i| i.predictions.iter().map(|p| p.confidence()))
        .collect();
    t.sort_by(|a, b| b.partial_cmp(a).unwrap());
    t.dedup();
    t
}

/// (threshold, recall, precision) at each distinct confidence.
pub fn oracle_pr(images: &[EvalImage], thr: f64) -> Vec<(f64, f64, f64)> {
    oracle_thresholds(images)
        .into_iter()
        .map(|t| {
            let c = oracle_counts_at(images, t, thr);
            (t, c.recall(), c.precision())
        })
        .collect()
}

/// (threshold, fppi, miss rate) at each distinct confidence.
pub fn oracle_mr(images: &[EvalImage], thr: f64, image_count: usize) -> Vec<(f64, f64, f64)> {
    oracle_thresholds(images)
        .into_iter()
        .map(|t| {
            let c = oracle_counts_at(images, t, thr);
            (t, c.fp as f64 / image_count as f64, c.miss_rate())
        })
        .collect()
}

/// 101-point interpolated AP by direct enumeration.
pub fn oracle_ap(points: &[(f64, f64)]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..=100 {
        let r = k as f64 / 100.0;
        let mut best = 0.0_f64;
        for &(rec, prec) in points {
            if rec >= r && prec > best {
                best = prec;
            }
        }
        total += best;
    }
    total / 101.0
}

pub fn oracle_ar(images: &[EvalImage]) -> f64 {
    let mut sum = 0.0;
    for i in 0..10 {
        let thr = 0.5 + 0.05 * i as f64;
        // Snap to the two-decimal grid the definition names.
        let thr = (thr * 100.0).round() / 100.0;
        sum += oracle_counts_at(images, f64::NEG_INFINITY, thr).recall();
    }
    sum / 10.0
}

/// Random canonical RLE on a `w x h` image, built from random run lengths.
pub fn random_bitmap(rng: &mut StdRng, w: u32, h: u32) -> Bitmap {
    let n = (w * h) as usize;
    let mut bits = Vec::with_capacity(n);
    let style = rng.random_range(0..3);
    let mut value = rng.random_bool(0.5);
    while bits.len() < n {
        let run = match style {
            0 => 1,
            1 => rng.random_range(1..=8),
            _ => rng.random_range(1..=(n / 4).max(1)),
        };
        let run = run.min(n - bits.len());
        if style == 0 {
            value = rng.random_bool(0.5);
        }
        bits.extend(std::iter::repeat_n(value, run));
        value = !value;
    }
    Bitmap::from_bits(w, h, bits).unwrap()
}

pub mod scorers {
    use segfuse::occlusion::{apply_occluder, Scorer, Window};
    use segfuse::synth::Rect;
    use segfuse::{BinaryMask, Result, ScoreMap};

    /// Ignores the occluder entirely.
    pub struct FlatScorer {
        pub map: ScoreMap,
    }

    impl Scorer for FlatScorer {
        fn baseline(&self) -> Result<ScoreMap> {
            Ok(self.map.clone())
        }

        fn occluded(&self, _: &Window, _: f64) -> Result<ScoreMap> {
            Ok(self.map.clone())
        }
    }

    /// Scores the person 0.9 unless the window touches it, in which case the
    /// whole person drops to 0; the occluded pixels themselves take the fill.
    pub struct ZeroingScorer {
        pub person: BinaryMask,
    }

    impl ZeroingScorer {
        fn render(&self, window: Option<&Window>, fill: f64) -> ScoreMap {
            let (w, h) = (self.person.width(), self.person.height());
            let person = self.person.to_bitmap();
            let hit = window.is_some_and(|win| {
                (win.x..win.x + win.width).any(|x| (win.y..win.y + win.height).any(|y| person.get(x, y)))
            });
            let mut values = vec![0.0; (w * h) as usize];
            for y in 0..h {
                for x in 0..w {
                    if person.get(x, y) && !hit {
                        values[(y * w + x) as usize] = 0.9;
                    }
                }
            }
            if let Some(win) = window {
                apply_occluder(&mut values, w, win, fill);
            }
            ScoreMap::new(w, h, values).unwrap()
        }
    }

    impl Scorer for ZeroingScorer {
        fn baseline(&self) -> Result<ScoreMap> {
            Ok(self.render(None, 0.0))
        }

        fn occluded(&self, window: &Window, fill: f64) -> Result<ScoreMap> {
            Ok(self.render(Some(window), fill))
        }
    }

    /// A reflection is judged by the mirror frame around it: hiding part of
    /// the frame makes the reflected person look more like a real one.
    pub struct FrameScorer {
        pub width: u32,
        pub height: u32,
        pub mirror: Rect,
        pub frame_thickness: u32,
        pub reflection: BinaryMask,
    }

    impl FrameScorer {
        pub fn on_frame(&self, x: u32, y: u32) -> bool {
            let m = &self.mirror;
            let t = self.frame_thickness;
            let inside_outer = x >= m.x && x < m.x + m.width && y >= m.y && y < m.y + m.height;
            let inside_inner = x >= m.x + t && x + t < m.x + m.width && y >= m.y + t && y + t < m.y + m.height;
            inside_outer && !inside_inner
        }

        pub fn window_hits_frame(&self, win: &Window) -> bool {
            (win.x..win.x + win.width).any(|x| (win.y..win.y + win.height).any(|y| self.on_frame(x, y)))
        }

        fn render(&self, window: Option<&Window>, fill: f64) -> ScoreMap {
            let (w, h) = (self.width, self.height);
            let frame_total = (0..w)
                .flat_map(|x| (0..h).map(move |y| (x, y)))
                .filter(|&(x, y)| self.on_frame(x, y))
                .count();
            let hidden = window.map_or(0, |win| {
                (win.x..win.x + win.width)
                    .flat_map(|x| (win.y..win.y + win.height).map(move |y| (x, y)))
                    .filter(|&(x, y)| self.on_frame(x, y))
                    .count()
            });
            let boost = 0.5 * hidden as f64 / frame_total as f64;
            let reflection = self.reflection.to_bitmap();
            let mut values = vec![0.0; (w * h) as usize];
            for y in 0..h {
                for x in 0..w {
                    let i = (y * w + x) as usize;
                    if reflection.get(x, y) {
                        values[i] = 0.1 + boost;
                    } else if self.on_frame(x, y) {
                        values[i] = 0.3;
                    }
                }
            }
            if let Some(win) = window {
                apply_occluder(&mut values, w, win, fill);
            }
            ScoreMap::new(w, h, values).unwrap()
        }
    }

    impl Scorer for FrameScorer {
        fn baseline(&self) -> Result<ScoreMap> {
            Ok(self.render(None, 0.0))
        }

        fn occluded(&self, window: &Window, fill: f64) -> Result<ScoreMap> {
            Ok(self.render(Some(window), fill))
        }
    }

    /// 120x80 scene: a 40x60 mirror at (20, 10) with a 4-pixel frame and a
    /// reflected person well inside it.
    pub fn frame_scene() -> FrameScorer {
        let mirror = Rect {
            x: 20,
            y: 10,
            width: 40,
            height: 60,
        };
        FrameScorer {
            width: 120,
            height: 80,
            mirror,
            frame_thickness: 4,
            reflection: BinaryMask::from_rect(120, 80, 32, 22, 12, 30),
        }
    }
}
