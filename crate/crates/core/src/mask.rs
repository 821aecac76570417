//! Pixel-level primitives: run-length encoded binary masks, dense score maps,
//! mask overlap and in-mask score aggregation.
//!
//! Masks use column-major scan order: pixel `(x, y)` lives at scan index
//! `x * height + y`. Run-length counts alternate zeros and ones, starting with
//! a (possibly empty) run of zeros.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered run-length counts, zeros first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RunLengthEncoding {
    counts: Vec<u32>,
}

impl RunLengthEncoding {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    /// Builds an encoding from signed counts as they appear in interchange
    /// files, rejecting negative entries.
    pub fn from_signed(counts: &[i64]) -> Result<Self> {
        let counts = counts
            .iter()
            .enumerate()
            .map(|(index, &value)| {
                u32::try_from(value).map_err(|_| {
                    if value < 0 {
                        Error::NegativeCount { index, value }
                    } else {
                        Error::InvalidConfig(format!("run count {value} exceeds u32"))
                    }
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn into_counts(self) -> Vec<u32> {
        self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }
}

/// A decoded mask, one flag per pixel in column-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitmap {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl Bitmap {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; pixel_count(width, height)],
        }
    }

    /// Wraps column-major flags; `bits.len()` must equal `width * height`.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        let expected = pixel_count(width, height);
        if bits.len() != expected {
            return Err(Error::LengthMismatch {
                expected: expected as u64,
                actual: bits.len() as u64,
                width,
                height,
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[scan_index(x, y, self.height)]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = scan_index(x, y, self.height);
        self.bits[i] = value;
    }

    pub fn area(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }
}

/// Decodes `rle` into a `width x height` bitmap.
pub fn rle_decode(rle: &RunLengthEncoding, width: u32, height: u32) -> Result<Bitmap> {
    check_total(rle, width, height)?;
    let mut bits = Vec::with_capacity(pixel_count(width, height));
    let mut value = false;
    for &count in rle.counts() {
        bits.extend(std::iter::repeat_n(value, count as usize));
        value = !value;
    }
    Ok(Bitmap { width, height, bits })
}

/// Canonical encoding of a bitmap: no empty runs except a leading zero run.
pub fn rle_encode(bitmap: &Bitmap) -> RunLengthEncoding {
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for &bit in &bitmap.bits {
        if bit != current {
            counts.push(run);
            run = 0;
            current = bit;
        }
        run += 1;
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    RunLengthEncoding { counts }
}

/// Axis-aligned pixel rectangle with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.x_max - self.x_min + 1
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min + 1
    }
}

/// A `width x height` binary mask held in canonical run-length form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    rle: RunLengthEncoding,
}

impl BinaryMask {
    /// Validates `rle` against the dimensions. Interior zero-length runs are
    /// rejected so every mask has exactly one encoding.
    pub fn from_rle(width: u32, height: u32, rle: RunLengthEncoding) -> Result<Self> {
        check_total(&rle, width, height)?;
        if let Some(index) = rle
            .counts()
            .iter()
            .enumerate()
            .skip(1)
            .find_map(|(i, &c)| (c == 0).then_some(i))
        {
            return Err(Error::ZeroInteriorRun { index });
        }
        if rle.counts().is_empty() && pixel_count(width, height) == 0 {
            return Ok(Self {
                width,
                height,
                rle: RunLengthEncoding::new(vec![0]),
            });
        }
        Ok(Self { width, height, rle })
    }

    pub fn from_bitmap(bitmap: &Bitmap) -> Self {
        Self {
            width: bitmap.width,
            height: bitmap.height,
            rle: rle_encode(bitmap),
        }
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            rle: RunLengthEncoding::new(vec![width * height]),
        }
    }

    /// Mask whose foreground is the (clipped) rectangle `[x, x+w) x [y, y+h)`.
    pub fn from_rect(width: u32, height: u32, x: u32, y: u32, w: u32, h: u32) -> Self {
        let x_end = x.saturating_add(w).min(width);
        let y_end = y.saturating_add(h).min(height);
        if x >= x_end || y >= y_end {
            return Self::empty(width, height);
        }
        let mut runs = RunBuilder::default();
        runs.push(false, x * height);
        for _ in x..x_end {
            runs.push(false, y);
            runs.push(true, y_end - y);
            runs.push(false, height - y_end);
        }
        runs.push(false, (width - x_end) * height);
        Self {
            width,
            height,
            rle: runs.finish(),
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn rle(&self) -> &RunLengthEncoding {
        &self.rle
    }

    pub fn to_bitmap(&self) -> Bitmap {
        rle_decode(&self.rle, self.width, self.height).expect("mask invariants hold")
    }

    pub fn area(&self) -> u64 {
        self.rle.counts().iter().skip(1).step_by(2).map(|&c| u64::from(c)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.area() == 0
    }

    /// Scan-index ranges of foreground pixels, in increasing order.
    pub fn foreground_runs(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        let mut pos = 0u64;
        self.rle.counts().iter().enumerate().filter_map(move |(i, &c)| {
            let start = pos;
            pos += u64::from(c);
            (i % 2 == 1 && c > 0).then_some(start..pos)
        })
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        let idx = scan_index(x, y, self.height) as u64;
        self.foreground_runs()
            .take_while(|r| r.start <= idx)
            .any(|r| r.contains(&idx))
    }

    /// Tight bounding box of the foreground, `None` for an empty mask.
    pub fn bbox(&self) -> Option<BoundingBox> {
        let h = u64::from(self.height);
        let mut bbox: Option<BoundingBox> = None;
        for run in self.foreground_runs() {
            let first_col = (run.start / h) as u32;
            let last_col = ((run.end - 1) / h) as u32;
            let (y_lo, y_hi) = if first_col == last_col {
                ((run.start % h) as u32, ((run.end - 1) % h) as u32)
            } else {
                (0, self.height - 1)
            };
            bbox = Some(match bbox {
                None => BoundingBox {
                    x_min: first_col,
                    y_min: y_lo,
                    x_max: last_col,
                    y_max: y_hi,
                },
                Some(b) => BoundingBox {
                    x_min: b.x_min.min(first_col),
                    y_min: b.y_min.min(y_lo),
                    x_max: b.x_max.max(last_col),
                    y_max: b.y_max.max(y_hi),
                },
            });
        }
        bbox
    }

    fn check_same_dims(&self, width: u32, height: u32) -> Result<()> {
        if self.width != width || self.height != height {
            return Err(Error::DimensionMismatch {
                left_width: self.width,
                left_height: self.height,
                right_width: width,
                right_height: height,
            });
        }
        Ok(())
    }

    /// Number of pixels set in both masks.
    pub fn intersection_area(&self, other: &BinaryMask) -> Result<u64> {
        self.check_same_dims(other.width, other.height)?;
        let mut a = self.foreground_runs().peekable();
        let mut b = other.foreground_runs().peekable();
        let mut total = 0u64;
        while let (Some(ra), Some(rb)) = (a.peek(), b.peek()) {
            let lo = ra.start.max(rb.start);
            let hi = ra.end.min(rb.end);
            if hi > lo {
                total += hi - lo;
            }
            if ra.end <= rb.end {
                a.next();
            } else {
                b.next();
            }
        }
        Ok(total)
    }
}

/// Intersection over union; two empty masks give 0.0.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_area(b)?;
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Dense per-pixel person scores in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    width: u32,
    height: u32,
    values: Vec<f64>,
}

impl ScoreMap {
    pub fn new(width: u32, height: u32, values: Vec<f64>) -> Result<Self> {
        let expected = pixel_count(width, height);
        if values.len() != expected {
            return Err(Error::LengthMismatch {
                expected: expected as u64,
                actual: values.len() as u64,
                width,
                height,
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::ScoreOutOfRange { index, value });
        }
        Ok(Self { width, height, values })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; pixel_count(width, height)])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.values[y as usize * self.width as usize + x as usize]
    }
}

/// Mean of `map` over the foreground of `mask`.
pub fn mean_score_in_mask(mask: &BinaryMask, map: &ScoreMap) -> Result<f64> {
    mask.check_same_dims(map.width, map.height)?;
    let h = u64::from(mask.height);
    let w = map.width as usize;
    let mut sum = 0.0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut area = 0u64;
    for run in mask.foreground_runs() {
        for idx in run {
            let x = (idx / h) as usize;
            let y = (idx % h) as usize;
            let v = map.values[y * w + x];
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
            area += 1;
        }
    }
    if area == 0 {
        return Err(Error::EmptyMask);
    }
    // Rounding in the sum must not push the mean outside the sampled range.
    Ok((sum / area as f64).clamp(lo, hi))
}

pub(crate) fn pixel_count(width: u32, height: u32) -> usize {
    width as usize * height as usize
}

fn scan_index(x: u32, y: u32, height: u32) -> usize {
    x as usize * height as usize + y as usize
}

fn check_total(rle: &RunLengthEncoding, width: u32, height: u32) -> Result<()> {
    let expected = pixel_count(width, height) as u64;
    let actual = rle.total();
    if actual != expected {
        return Err(Error::LengthMismatch {
            expected,
            actual,
            width,
            height,
        });
    }
    Ok(())
}

/// Accumulates alternating runs, merging consecutive runs of equal value.
#[derive(Default)]
struct RunBuilder {
    counts: Vec<u32>,
}

impl RunBuilder {
    fn push(&mut self, value: bool, len: u32) {
        if len == 0 {
            return;
        }
        // Odd-length count list means the last run was zeros.
        let last_is_one = self.counts.len().is_multiple_of(2) && !self.counts.is_empty();
        match (self.counts.is_empty(), value) {
            (true, false) => self.counts.push(len),
            (true, true) => self.counts.extend([0, len]),
            (false, v) if v == last_is_one => *self.counts.last_mut().unwrap() += len,
            (false, _) => self.counts.push(len),
        }
    }

    fn finish(self) -> RunLengthEncoding {
        if self.counts.is_empty() {
            return RunLengthEncoding::new(vec![0]);
        }
        RunLengthEncoding::new(self.counts)
    }
}
