//! Occlusion sensitivity: slide a grey window over the image, re-score each
//! occluded variant, and record how the mean score over the still-visible
//! ground-truth pixels moves relative to the unoccluded baseline.

use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::pgm::load_score_map;
use crate::mask::{BinaryMask, ScoreMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    pub window_width: u32,
    pub window_height: u32,
    pub stride: u32,
    /// Grey level of the occluder in `[0, 1]`.
    pub fill_value: f64,
}

impl Default for OcclusionConfig {
    fn default() -> Self {
        Self {
            window_width: 96,
            window_height: 54,
            stride: 5,
            fill_value: 0.5,
        }
    }
}

impl OcclusionConfig {
    pub fn validate(&self, image_width: u32, image_height: u32) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be at least 1".into()));
        }
        if self.window_width == 0 || self.window_height == 0 {
            return Err(Error::InvalidConfig("window must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.fill_value) {
            return Err(Error::RatioOutOfRange {
                field: "fill_value",
                value: self.fill_value,
            });
        }
        if self.window_width > image_width || self.window_height > image_height {
            return Err(Error::WindowLargerThanImage {
                window_width: self.window_width,
                window_height: self.window_height,
                image_width,
                image_height,
            });
        }
        Ok(())
    }
}

/// One placement of the occluder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Window {
    pub fn covers(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

fn axis_positions(extent: u32, window: u32, stride: u32) -> u32 {
    (extent - window) / stride + 1
}

/// Grid dimensions `(columns, rows)` of window positions.
pub fn grid_size(image_width: u32, image_height: u32, cfg: &OcclusionConfig) -> Result<(u32, u32)> {
    cfg.validate(image_width, image_height)?;
    Ok((
        axis_positions(image_width, cfg.window_width, cfg.stride),
        axis_positions(image_height, cfg.window_height, cfg.stride),
    ))
}

/// Window origins in row-major order.
pub fn occlusion_grid(image_width: u32, image_height: u32, cfg: &OcclusionConfig) -> Result<Vec<Window>> {
    let (cols, rows) = grid_size(image_width, image_height, cfg)?;
    Ok((0..rows)
        .flat_map(|gy| {
            (0..cols).map(move |gx| Window {
                x: gx * cfg.stride,
                y: gy * cfg.stride,
                width: cfg.window_width,
                height: cfg.window_height,
            })
        })
        .collect())
}

/// Produces the semantic score map of the baseline image and of occluded
/// variants of it.
pub trait Scorer: Sync {
    fn baseline(&self) -> Result<ScoreMap>;

    fn occluded(&self, window: &Window, fill_value: f64) -> Result<ScoreMap>;

    /// Whether `occluded` may be called from several threads at once.
    fn reentrant(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorerMode {
    /// A directory holding `baseline.pgm` and `occluded_{x}_{y}.pgm` for
    /// every window origin.
    PrecomputedMaps,
    /// A program invoked once per window; see [`ScorerBinding`].
    ExternalCommand,
}

/// Configuration of a file- or process-backed scorer.
///
/// In external-command mode `location` is the program followed by any fixed
/// arguments, whitespace separated. Each call appends
/// `IMAGE X Y WIDTH HEIGHT FILL OUTPUT` and the program must write a score
/// map greymap to `OUTPUT` and exit with status 0. The baseline call passes a
/// zero-sized window at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerBinding {
    pub mode: ScorerMode,
    pub location: String,
    pub reentrant: bool,
    /// Image handed to the external command.
    pub image: Option<PathBuf>,
    /// Scratch directory for external-command outputs.
    pub work_dir: Option<PathBuf>,
}

impl ScorerBinding {
    pub fn precomputed(dir: impl Into<PathBuf>) -> Self {
        Self {
            mode: ScorerMode::PrecomputedMaps,
            location: dir.into().to_string_lossy().into_owned(),
            reentrant: true,
            image: None,
            work_dir: None,
        }
    }

    pub fn external(
        command: impl Into<String>,
        image: impl Into<PathBuf>,
        work_dir: impl Into<PathBuf>,
        reentrant: bool,
    ) -> Self {
        Self {
            mode: ScorerMode::ExternalCommand,
            location: command.into(),
            reentrant,
            image: Some(image.into()),
            work_dir: Some(work_dir.into()),
        }
    }

    pub fn precomputed_path(dir: &Path, window: Option<&Window>) -> PathBuf {
        match window {
            None => dir.join("baseline.pgm"),
            Some(w) => dir.join(format!("occluded_{}_{}.pgm", w.x, w.y)),
        }
    }

    fn load(path: &Path) -> Result<ScoreMap> {
        load_score_map(path).map_err(|e| Error::ScorerFailure(e.to_string()))
    }

    fn run_command(&self, window: &Window, fill_value: f64) -> Result<ScoreMap> {
        let mut parts = self.location.split_whitespace();
        let program = parts
            .next()
            .ok_or_else(|| Error::ScorerFailure("empty scorer command".into()))?;
        let image = self
            .image
            .as_ref()
            .ok_or_else(|| Error::ScorerFailure("external scorer needs an image path".into()))?;
        let work_dir = self.work_dir.clone().unwrap_or_else(std::env::temp_dir);
        let out = work_dir.join(format!(
            "score_{}_{}_{}_{}.pgm",
            window.x, window.y, window.width, window.height
        ));
        let output = Command::new(program)
            .args(parts)
            .arg(image)
            .args([window.x, window.y, window.width, window.height].map(|v| v.to_string()))
            .arg(fill_value.to_string())
            .arg(&out)
            .output()
            .map_err(|e| Error::ScorerFailure(format!("could not run {program}: {e}")))?;
        if !output.status.success() {
            return Err(Error::ScorerFailure(format!(
                "{program} exited with {} for window ({}, {}): {}",
                output.status,
                window.x,
                window.y,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let map = Self::load(&out);
        let _ = std::fs::remove_file(&out);
        map
    }
}

impl Scorer for ScorerBinding {
    fn baseline(&self) -> Result<ScoreMap> {
        match self.mode {
            ScorerMode::PrecomputedMaps => Self::load(&Self::precomputed_path(Path::new(&self.location), None)),
            ScorerMode::ExternalCommand => self.run_command(
                &Window {
                    x: 0,
                    y: 0,
                    width: 0,
                    height: 0,
                },
                0.0,
            ),
        }
    }

    fn occluded(&self, window: &Window, fill_value: f64) -> Result<ScoreMap> {
        match self.mode {
            ScorerMode::PrecomputedMaps => Self::load(&Self::precomputed_path(Path::new(&self.location), Some(window))),
            ScorerMode::ExternalCommand => self.run_command(window, fill_value),
        }
    }

    fn reentrant(&self) -> bool {
        self.mode == ScorerMode::PrecomputedMaps || self.reentrant
    }
}

/// Baseline-relative score change per window position, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    grid_width: usize,
    grid_height: usize,
    /// `None` where the window hides every ground-truth pixel.
    values: Vec<Option<f64>>,
}

impl Heatmap {
    pub fn grid_width(&self) -> usize {
        self.grid_width
    }

    pub fn grid_height(&self) -> usize {
        self.grid_height
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, gx: usize, gy: usize) -> Option<f64> {
        self.values[gy * self.grid_width + gx]
    }
}

/// Mean of `occluded` minus mean of `baseline` over the ground-truth pixels
/// outside `window`; `None` when no such pixel exists.
pub fn visible_delta(
    gt_pixels: &[(u32, u32)],
    window: &Window,
    baseline: &ScoreMap,
    occluded: &ScoreMap,
) -> Option<f64> {
    let mut n = 0u64;
    let mut sum_occ = 0.0;
    let mut sum_base = 0.0;
    for &(x, y) in gt_pixels {
        if window.covers(x, y) {
            continue;
        }
        n += 1;
        sum_occ += occluded.get(x, y);
        sum_base += baseline.get(x, y);
    }
    (n > 0).then(|| sum_occ / n as f64 - sum_base / n as f64)
}

fn check_map(map: &ScoreMap, width: u32, height: u32, what: &str) -> Result<()> {
    if (map.width(), map.height()) != (width, height) {
        return Err(Error::ScorerFailure(format!(
            "{what} map is {}x{}, expected {width}x{height}",
            map.width(),
            map.height()
        )));
    }
    Ok(())
}

pub fn occlusion_heatmap(gt_mask: &BinaryMask, scorer: &dyn Scorer, cfg: &OcclusionConfig) -> Result<Heatmap> {
    let (width, height) = (gt_mask.width(), gt_mask.height());
    let (cols, rows) = grid_size(width, height, cfg)?;
    let windows = occlusion_grid(width, height, cfg)?;
    if gt_mask.is_empty() {
        return Err(Error::EmptyVisibleMask);
    }
    let h = u64::from(height);
    let gt_pixels: Vec<(u32, u32)> = gt_mask
        .foreground_runs()
        .flatten()
        .map(|i| ((i / h) as u32, (i % h) as u32))
        .collect();

    let baseline = scorer.baseline()?;
    check_map(&baseline, width, height, "baseline")?;
    let cell = |w: &Window| -> Result<Option<f64>> {
        let map = scorer.occluded(w, cfg.fill_value)?;
        check_map(&map, width, height, "occluded")?;
        Ok(visible_delta(&gt_pixels, w, &baseline, &map))
    };
    let values = if scorer.reentrant() {
        windows.par_iter().map(cell).collect::<Result<Vec<_>>>()?
    } else {
        windows.iter().map(cell).collect::<Result<Vec<_>>>()?
    };
    Ok(Heatmap {
        grid_width: cols as usize,
        grid_height: rows as usize,
        values,
    })
}

/// Greys out `window` in a row-major image with values in `[0, 1]`.
pub fn apply_occluder(image: &mut [f64], image_width: u32, window: &Window, fill_value: f64) {
    for y in window.y..window.y + window.height {
        let row = y as usize * image_width as usize;
        for x in window.x..window.x + window.width {
            image[row + x as usize] = fill_value;
        }
    }
}
