//! Deterministic synthetic "mirror scenes".
//!
//! Each scene holds rectangular people outside a mirror and reflected,
//! half-scale copies inside it. The simulated instance detector fires on
//! both; the simulated semantic map scores people high and reflections low,
//! so the fusion outcome (and therefore every count) is known in closed form.
//!
//! Randomness comes from SplitMix64. Per-pixel noise is Gaussian with the
//! configured standard deviation, truncated to three standard deviations,
//! added to the base score and clamped to `[0, 1]`.

use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{InstancePrediction, PERSON_CATEGORY};
use crate::io::detection::ImageInfo;
use crate::mask::{BinaryMask, ScoreMap};
use crate::metrics::{Counts, EvalImage, GroundTruthInstance};

const MAX_PLACEMENT_ATTEMPTS: u32 = 1000;
/// Noise is truncated at this many standard deviations.
pub const NOISE_TRUNCATION: f64 = 3.0;
/// Required gap, in standard deviations, between a base score and `c` for
/// the closed-form oracle to apply.
pub const SEPARATION_SIGMAS: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Rect {
    pub fn right(&self) -> u32 {
        self.x + self.width
    }

    pub fn bottom(&self) -> u32 {
        self.y + self.height
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.x < other.right() && other.x < self.right() && self.y < other.bottom() && other.y < self.bottom()
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x >= self.x && other.y >= self.y && other.right() <= self.right() && other.bottom() <= self.bottom()
    }

    pub fn to_mask(&self, image_width: u32, image_height: u32) -> BinaryMask {
        BinaryMask::from_rect(image_width, image_height, self.x, self.y, self.width, self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub image_width: u32,
    pub image_height: u32,
    pub true_count: u32,
    pub reflection_count: u32,
    pub mirror_rect: Rect,
    pub semantic_score_true: f64,
    pub semantic_score_reflection: f64,
    pub semantic_noise: f64,
    pub detector_confidence_range: (f64, f64),
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_width: 480,
            image_height: 270,
            true_count: 5,
            reflection_count: 5,
            mirror_rect: Rect {
                x: 16,
                y: 16,
                width: 160,
                height: 200,
            },
            semantic_score_true: 0.6,
            semantic_score_reflection: 0.01,
            semantic_noise: 0.005,
            detector_confidence_range: (0.5, 1.0),
            seed: 0,
        }
    }
}

impl SceneConfig {
    /// Default scene scaled to a `width x height` image; the mirror keeps the
    /// same relative placement.
    pub fn with_size(width: u32, height: u32) -> Self {
        let d = Self::default();
        let sx = |v: u32| (u64::from(v) * u64::from(width) / u64::from(d.image_width)) as u32;
        let sy = |v: u32| (u64::from(v) * u64::from(height) / u64::from(d.image_height)) as u32;
        Self {
            image_width: width,
            image_height: height,
            mirror_rect: Rect {
                x: sx(d.mirror_rect.x),
                y: sy(d.mirror_rect.y),
                width: sx(d.mirror_rect.width),
                height: sy(d.mirror_rect.height),
            },
            ..d
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image dimensions must be positive".into());
        }
        let image = Rect {
            x: 0,
            y: 0,
            width: self.image_width,
            height: self.image_height,
        };
        if !image.contains_rect(&self.mirror_rect) {
            return bad(format!("mirror {:?} does not fit in the image", self.mirror_rect));
        }
        for (field, value) in [
            ("semantic_score_true", self.semantic_score_true),
            ("semantic_score_reflection", self.semantic_score_reflection),
            ("semantic_noise", self.semantic_noise),
            ("detector_confidence_range.0", self.detector_confidence_range.0),
            ("detector_confidence_range.1", self.detector_confidence_range.1),
        ] {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::RatioOutOfRange { field, value });
            }
        }
        if self.detector_confidence_range.0 > self.detector_confidence_range.1 {
            return bad("detector confidence range is reversed".into());
        }
        Ok(())
    }

    /// Person width and height bounds, inclusive.
    fn person_size_bounds(&self) -> ((u32, u32), (u32, u32)) {
        let w = ((self.image_width / 40).max(1), (self.image_width / 20).max(1));
        let h = ((self.image_height / 8).max(1), (self.image_height / 4).max(1));
        (w, h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub config: SceneConfig,
    pub image_id: u64,
    pub people: Vec<Rect>,
    pub reflections: Vec<Rect>,
    /// People only; a reflection is not a person.
    pub ground_truths: Vec<GroundTruthInstance>,
    /// People first, then reflections.
    pub predictions: Vec<InstancePrediction>,
    pub score_map: ScoreMap,
}

impl SceneBundle {
    pub fn image_info(&self) -> ImageInfo {
        ImageInfo {
            id: self.image_id,
            width: self.config.image_width,
            height: self.config.image_height,
        }
    }

    pub fn eval_image(&self) -> EvalImage {
        EvalImage {
            image_id: self.image_id,
            predictions: self.predictions.clone(),
            ground_truths: self.ground_truths.clone(),
        }
    }

    pub fn expected(&self, c: f64) -> Result<ExpectedMetrics> {
        expected_metrics(&self.config, c)
    }
}

fn place(rng: &mut SplitMix64, size: (u32, u32), region: Rect, ok: impl Fn(&Rect) -> bool, what: &str) -> Result<Rect> {
    let failure = || Error::PlacementFailure {
        what: what.to_string(),
        attempts: MAX_PLACEMENT_ATTEMPTS,
    };
    if size.0 > region.width || size.1 > region.height {
        return Err(failure());
    }
    for _ in 0..MAX_PLACEMENT_ATTEMPTS {
        let candidate = Rect {
            x: region.x + rng.random_range(0..=region.width - size.0),
            y: region.y + rng.random_range(0..=region.height - size.1),
            width: size.0,
            height: size.1,
        };
        if ok(&candidate) {
            return Ok(candidate);
        }
    }
    Err(failure())
}

/// Builds one scene with image id 0.
pub fn generate_scene(cfg: &SceneConfig) -> Result<SceneBundle> {
    generate_scene_with_id(cfg, 0)
}

pub fn generate_scene_with_id(cfg: &SceneConfig, image_id: u64) -> Result<SceneBundle> {
    cfg.validate()?;
    let (w, h) = (cfg.image_width, cfg.image_height);
    let mut master = SplitMix64::seed_from_u64(cfg.seed);
    let mut rng = SplitMix64::seed_from_u64(master.next_u64());
    let mut noise_rng = SplitMix64::seed_from_u64(master.next_u64());

    let image = Rect {
        x: 0,
        y: 0,
        width: w,
        height: h,
    };
    let ((w_lo, w_hi), (h_lo, h_hi)) = cfg.person_size_bounds();
    let sample_size = |rng: &mut SplitMix64| (rng.random_range(w_lo..=w_hi), rng.random_range(h_lo..=h_hi));

    let mut people: Vec<Rect> = Vec::new();
    for i in 0..cfg.true_count {
        let size = sample_size(&mut rng);
        let r = place(
            &mut rng,
            size,
            image,
            |c| !c.intersects(&cfg.mirror_rect) && people.iter().all(|p| !p.intersects(c)),
            &format!("person {i}"),
        )?;
        people.push(r);
    }
    let mut reflections: Vec<Rect> = Vec::new();
    for i in 0..cfg.reflection_count {
        let source = if people.is_empty() {
            sample_size(&mut rng)
        } else {
            let p = people[i as usize % people.len()];
            (p.width, p.height)
        };
        let size = (source.0.div_ceil(2), source.1.div_ceil(2));
        let r = place(
            &mut rng,
            size,
            cfg.mirror_rect,
            |c| reflections.iter().all(|p| !p.intersects(c)),
            &format!("reflection {i}"),
        )?;
        reflections.push(r);
    }

    let (conf_lo, conf_hi) = cfg.detector_confidence_range;
    let confidence = |rng: &mut SplitMix64| conf_lo + (conf_hi - conf_lo) * rng.random::<f64>();
    let mut ground_truths = Vec::with_capacity(people.len());
    let mut predictions = Vec::with_capacity(people.len() + reflections.len());
    for (i, r) in people.iter().enumerate() {
        let mask = r.to_mask(w, h);
        ground_truths.push(GroundTruthInstance::new(
            i as u64,
            PERSON_CATEGORY,
            image_id,
            mask.clone(),
        )?);
        predictions.push(InstancePrediction::new(
            i as u64,
            PERSON_CATEGORY,
            confidence(&mut rng),
            mask,
        )?);
    }
    for (j, r) in reflections.iter().enumerate() {
        let id = (people.len() + j) as u64;
        predictions.push(InstancePrediction::new(
            id,
            PERSON_CATEGORY,
            confidence(&mut rng),
            r.to_mask(w, h),
        )?);
    }

    let mut base = vec![0.0; w as usize * h as usize];
    let mut paint = |r: &Rect, v: f64| {
        for y in r.y..r.bottom() {
            let row = y as usize * w as usize;
            base[row + r.x as usize..row + r.right() as usize].fill(v);
        }
    };
    people.iter().for_each(|r| paint(r, cfg.semantic_score_true));
    reflections.iter().for_each(|r| paint(r, cfg.semantic_score_reflection));
    if cfg.semantic_noise > 0.0 {
        let normal = Normal::new(0.0, cfg.semantic_noise).map_err(|e| Error::InvalidConfig(format!("noise: {e}")))?;
        let bound = NOISE_TRUNCATION * cfg.semantic_noise;
        for v in &mut base {
            let n: f64 = normal.sample(&mut noise_rng);
            *v = (*v + n.clamp(-bound, bound)).clamp(0.0, 1.0);
        }
    }
    let score_map = ScoreMap::new(w, h, base)?;

    Ok(SceneBundle {
        config: cfg.clone(),
        image_id,
        people,
        reflections,
        ground_truths,
        predictions,
        score_map,
    })
}

/// Seed of scene `index` in a benchmark rooted at `base_seed`.
pub fn scene_seed(base_seed: u64, index: u64) -> u64 {
    let mut rng = SplitMix64::seed_from_u64(base_seed);
    let mut out = rng.next_u64();
    for _ in 0..index {
        out = rng.next_u64();
    }
    out
}

/// `scenes` scenes with image ids `0..scenes`, each seeded from `cfg.seed`.
pub fn generate_benchmark(cfg: &SceneConfig, scenes: u32) -> Result<Vec<SceneBundle>> {
    use rayon::prelude::*;
    (0..u64::from(scenes))
        .into_par_iter()
        .map(|i| {
            let scene_cfg = SceneConfig {
                seed: scene_seed(cfg.seed, i),
                ..cfg.clone()
            };
            generate_scene_with_id(&scene_cfg, i).map(|mut b| {
                b.config.seed = cfg.seed;
                b
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectedMetrics {
    pub counts: Counts,
    pub precision: f64,
    pub recall: f64,
}

/// Whether instances with base score `score` survive fusion at `c`, or an
/// error if noise could push their mean across `c`.
fn survives(score: f64, c: f64, noise: f64) -> Result<bool> {
    if c == 0.0 {
        return Ok(true);
    }
    let gap = (score - c).abs();
    let margin = SEPARATION_SIGMAS * noise;
    // Decimal inputs such as 0.04 - 0.01 vs 6 * 0.005 must count as equal.
    if gap < margin * (1.0 - 1e-9) {
        return Err(Error::SeparationTooSmall { gap, margin });
    }
    Ok(score >= c)
}

/// Closed-form counts for one scene after fusion at `c`; `c = 0` gives the
/// unfused counts.
pub fn expected_metrics(cfg: &SceneConfig, c: f64) -> Result<ExpectedMetrics> {
    cfg.validate()?;
    let keep_people = cfg.true_count == 0 || survives(cfg.semantic_score_true, c, cfg.semantic_noise)?;
    let keep_reflections = cfg.reflection_count == 0 || survives(cfg.semantic_score_reflection, c, cfg.semantic_noise)?;
    let tp = if keep_people { u64::from(cfg.true_count) } else { 0 };
    let counts = Counts {
        tp,
        fp: if keep_reflections {
            u64::from(cfg.reflection_count)
        } else {
            0
        },
        fn_: u64::from(cfg.true_count) - tp,
    };
    Ok(ExpectedMetrics {
        counts,
        precision: counts.precision(),
        recall: counts.recall(),
    })
}
