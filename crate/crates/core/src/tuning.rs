//! Sweeping the fusion threshold over a validation set and choosing an
//! operating point.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{accepts, instance_scores};
use crate::mask::ScoreMap;
use crate::metrics::{match_detections, Counts, EvalImage};

/// Thresholds 0.000, 0.005, ..., 0.200.
pub fn default_c_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 / 200.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub c: f64,
    pub precision: f64,
    pub recall: f64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl SweepRow {
    pub fn from_counts(c: f64, counts: Counts) -> Self {
        Self {
            c,
            precision: counts.precision(),
            recall: counts.recall(),
            fp: counts.fp,
            fn_: counts.fn_,
        }
    }

    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.c
            .total_cmp(&other.c)
            .then(self.precision.total_cmp(&other.precision))
            .then(self.recall.total_cmp(&other.recall))
            .then(self.fp.cmp(&other.fp))
            .then(self.fn_.cmp(&other.fn_))
    }
}

/// Sweep rows sorted ascending by `c`, exact duplicates removed.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepTable {
    rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn new(mut rows: Vec<SweepRow>) -> Self {
        rows.sort_by(SweepRow::canonical_cmp);
        rows.dedup_by(|a, b| a.canonical_cmp(b) == Ordering::Equal);
        Self { rows }
    }

    pub fn rows(&self) -> &[SweepRow] {
        &self.rows
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    max_recall_drop: f64,
}

impl SelectionPolicy {
    pub fn new(max_recall_drop: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&max_recall_drop) {
            return Err(Error::RatioOutOfRange {
                field: "max_recall_drop",
                value: max_recall_drop,
            });
        }
        Ok(Self { max_recall_drop })
    }

    pub fn max_recall_drop(&self) -> f64 {
        self.max_recall_drop
    }
}

impl Default for SelectionPolicy {
    fn default() -> Self {
        Self { max_recall_drop: 0.01 }
    }
}

/// Fuses every image at each threshold in `c_values` and tabulates the
/// resulting counts. `maps` is parallel to `images`.
pub fn sweep_thresholds(
    images: &[EvalImage],
    maps: &[ScoreMap],
    c_values: &[f64],
    iou_threshold: f64,
) -> Result<SweepTable> {
    if c_values.is_empty() {
        return Err(Error::InvalidConfig("no thresholds to sweep".into()));
    }
    if let Some(&c) = c_values.iter().find(|c| !(0.0..=1.0).contains(*c)) {
        return Err(Error::RatioOutOfRange { field: "c", value: c });
    }
    if maps.len() != images.len() {
        return Err(Error::InvalidConfig(format!(
            "{} score maps for {} images",
            maps.len(),
            images.len()
        )));
    }
    // Scores do not depend on c, so compute them once.
    let scores: Vec<Vec<Option<f64>>> = images
        .par_iter()
        .zip(maps.par_iter())
        .map(|(img, map)| instance_scores(&img.predictions, map))
        .collect::<Result<_>>()?;

    let rows = c_values
        .par_iter()
        .map(|&c| {
            let counts = images
                .iter()
                .zip(&scores)
                .try_fold(Counts::default(), |acc, (img, s)| -> Result<Counts> {
                    let kept: Vec<_> = img
                        .predictions
                        .iter()
                        .zip(s)
                        .filter(|(_, &m)| accepts(m, c))
                        .map(|(p, _)| p.clone())
                        .collect();
                    Ok(acc + match_detections(&kept, &img.ground_truths, iou_threshold)?.counts())
                })?;
            Ok(SweepRow::from_counts(c, counts))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepTable::new(rows))
}

/// Smallest `c` attaining the best precision among rows whose recall is
/// within `max_recall_drop` of the best recall in the table.
pub fn select_threshold(table: &SweepTable, policy: &SelectionPolicy) -> Result<f64> {
    let rows = table.rows();
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let max_recall = rows.iter().map(|r| r.recall).fold(f64::NEG_INFINITY, f64::max);
    let floor = max_recall - policy.max_recall_drop;
    let eligible = || rows.iter().filter(|r| r.recall >= floor);
    let best = eligible().map(|r| r.precision).fold(f64::NEG_INFINITY, f64::max);
    // Rows are sorted by c, so the first hit is the smallest c.
    Ok(eligible()
        .find(|r| r.precision == best)
        .map(|r| r.c)
        .expect("the max-recall row is always eligible"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(c: f64, precision: f64, recall: f64) -> SweepRow {
        SweepRow {
            c,
            precision,
            recall,
            fp: 0,
            fn_: 0,
        }
    }

    #[test]
    fn grid_brackets_operating_point() {
        let g = default_c_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[8], 0.04);
        assert_eq!(g[40], 0.2);
    }

    #[test]
    fn single_row() {
        let t = SweepTable::new(vec![row(0.3, 0.5, 0.5)]);
        assert_eq!(select_threshold(&t, &SelectionPolicy::default()).unwrap(), 0.3);
    }

    #[test]
    fn increasing_precision_constant_recall_picks_largest() {
        let t = SweepTable::new(
            (0..10)
                .map(|i| row(i as f64 / 10.0, 0.5 + i as f64 / 20.0, 0.9))
                .collect(),
        );
        assert_eq!(select_threshold(&t, &SelectionPolicy::default()).unwrap(), 0.9);
    }

    #[test]
    fn recall_budget_binds() {
        let t = SweepTable::new(vec![row(0.0, 0.5, 1.0), row(0.1, 0.8, 0.995), row(0.2, 0.9, 0.98)]);
        assert_eq!(select_threshold(&t, &SelectionPolicy::default()).unwrap(), 0.1);
        let loose = SelectionPolicy::new(0.05).unwrap();
        assert_eq!(select_threshold(&t, &loose).unwrap(), 0.2);
        assert_eq!(select_threshold(&t, &SelectionPolicy::new(0.0).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn ties_pick_smallest_c() {
        let t = SweepTable::new(vec![row(0.2, 1.0, 1.0), row(0.05, 1.0, 1.0), row(0.0, 0.5, 1.0)]);
        assert_eq!(select_threshold(&t, &SelectionPolicy::default()).unwrap(), 0.05);
    }

    #[test]
    fn empty_and_invalid() {
        assert!(matches!(
            select_threshold(&SweepTable::default(), &SelectionPolicy::default()),
            Err(Error::EmptyTable)
        ));
        assert!(SelectionPolicy::new(1.5).is_err());
        assert!(sweep_thresholds(&[], &[], &[], 0.5).is_err());
        assert!(sweep_thresholds(&[], &[], &[1.2], 0.5).is_err());
    }
}
