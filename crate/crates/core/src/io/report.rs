//! CSV and SVG report files.
//!
//! Real numbers are printed with six significant digits in fixed notation
//! (`0.711570`, `1.00000`, `12.3000`); counts are printed as integers.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use super::svg::{render_heatmap, render_panels, Panel};
use crate::error::{Error, Result};
use crate::metrics::{CurvePoint, MetricsReport};
use crate::occlusion::Heatmap;
use crate::tuning::SweepTable;

pub const SUMMARY_HEADER: &str = "fp,fn,precision,recall,ap,ar";
pub const PR_HEADER: &str = "threshold,recall,precision";
pub const MR_FPPI_HEADER: &str = "threshold,fppi,miss_rate";
pub const SWEEP_HEADER: &str = "c,precision,recall,fp,fn";

/// Six significant digits, fixed notation.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() {
            "0.00000".into()
        } else {
            format!("{x}")
        };
    }
    // The exponent after rounding to six significant digits decides how many
    // decimals are needed.
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    let decimals = (5 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// A named file body produced by a report renderer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFile {
    pub suffix: &'static str,
    pub contents: String,
}

fn csv<I: IntoIterator<Item = String>>(header: &str, rows: I) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for row in rows {
        s.push_str(&row);
        s.push('\n');
    }
    s
}

fn curve_csv(header: &str, curve: &[CurvePoint]) -> String {
    csv(
        header,
        curve
            .iter()
            .map(|p| format!("{},{},{}", fmt6(p.threshold), fmt6(p.x), fmt6(p.y))),
    )
}

pub fn summary_csv(report: &MetricsReport) -> String {
    csv(
        SUMMARY_HEADER,
        [format!(
            "{},{},{},{},{},{}",
            report.counts.fp,
            report.counts.fn_,
            fmt6(report.precision),
            fmt6(report.recall),
            fmt6(report.ap),
            fmt6(report.ar)
        )],
    )
}

/// All files of a metrics report, in a fixed order.
pub fn render_report(report: &MetricsReport) -> Vec<ReportFile> {
    let pr_points = report.pr_curve.iter().map(|p| (p.x, p.y)).collect();
    let mr_points: Vec<(f64, f64)> = report.mr_fppi_curve.iter().map(|p| (p.x, p.y)).collect();
    let fppi_range = Panel::unit_or_max(mr_points.iter().map(|p| p.0));
    vec![
        ReportFile {
            suffix: "summary.csv",
            contents: summary_csv(report),
        },
        ReportFile {
            suffix: "pr.csv",
            contents: curve_csv(PR_HEADER, &report.pr_curve),
        },
        ReportFile {
            suffix: "mr_fppi.csv",
            contents: curve_csv(MR_FPPI_HEADER, &report.mr_fppi_curve),
        },
        ReportFile {
            suffix: "pr.svg",
            contents: render_panels(&[Panel {
                title: "Precision vs recall",
                x_label: "recall",
                y_label: "precision",
                x_range: (0.0, 1.0),
                y_range: (0.0, 1.0),
                points: pr_points,
            }]),
        },
        ReportFile {
            suffix: "mr_fppi.svg",
            contents: render_panels(&[Panel {
                title: "Miss rate vs false positives per image",
                x_label: "false positives per image",
                y_label: "miss rate",
                x_range: fppi_range,
                y_range: (0.0, 1.0),
                points: mr_points,
            }]),
        },
    ]
}

pub fn render_sweep(table: &SweepTable) -> Vec<ReportFile> {
    let rows = table.rows();
    let c_max = rows.iter().map(|r| r.c).fold(0.0, f64::max);
    let c_range = (0.0, if c_max > 0.0 { c_max } else { 1.0 });
    vec![
        ReportFile {
            suffix: "sweep.csv",
            contents: csv(
                SWEEP_HEADER,
                rows.iter().map(|r| {
                    format!(
                        "{},{},{},{},{}",
                        fmt6(r.c),
                        fmt6(r.precision),
                        fmt6(r.recall),
                        r.fp,
                        r.fn_
                    )
                }),
            ),
        },
        ReportFile {
            suffix: "sweep.svg",
            contents: render_panels(&[
                Panel {
                    title: "Precision vs c",
                    x_label: "c",
                    y_label: "precision",
                    x_range: c_range,
                    y_range: (0.0, 1.0),
                    points: rows.iter().map(|r| (r.c, r.precision)).collect(),
                },
                Panel {
                    title: "Recall vs c",
                    x_label: "c",
                    y_label: "recall",
                    x_range: c_range,
                    y_range: (0.0, 1.0),
                    points: rows.iter().map(|r| (r.c, r.recall)).collect(),
                },
                Panel {
                    title: "Precision vs recall",
                    x_label: "recall",
                    y_label: "precision",
                    x_range: (0.0, 1.0),
                    y_range: (0.0, 1.0),
                    points: rows.iter().map(|r| (r.recall, r.precision)).collect(),
                },
            ]),
        },
    ]
}

/// Heatmap CSV: one grid row per line, absent cells as empty fields.
pub fn heatmap_csv(heatmap: &Heatmap) -> String {
    let mut s = String::new();
    for row in heatmap.values().chunks(heatmap.grid_width().max(1)) {
        let cells: Vec<String> = row.iter().map(|v| v.map(fmt6).unwrap_or_default()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn render_heatmap_files(heatmap: &Heatmap) -> Vec<ReportFile> {
    vec![
        ReportFile {
            suffix: "heatmap.csv",
            contents: heatmap_csv(heatmap),
        },
        ReportFile {
            suffix: "heatmap.svg",
            contents: render_heatmap(
                heatmap.grid_width(),
                heatmap.grid_height(),
                heatmap.values(),
                "Score change when occluded",
            ),
        },
    ]
}

/// `prefix` followed directly by `suffix`, e.g. `out/pre_` + `summary.csv`.
pub fn prefixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = OsString::from(prefix.as_os_str());
    s.push(suffix);
    PathBuf::from(s)
}

pub fn write_files(files: &[ReportFile], prefix: &Path) -> Result<Vec<PathBuf>> {
    files
        .iter()
        .map(|f| {
            let path = prefixed(prefix, f.suffix);
            fs::write(&path, &f.contents).map_err(|e| Error::io(&path, e))?;
            Ok(path)
        })
        .collect()
}

/// Writes `summary.csv`, `pr.csv`, `mr_fppi.csv`, `pr.svg` and
/// `mr_fppi.svg` under `path_prefix`, returning the paths written.
pub fn emit_report(report: &MetricsReport, path_prefix: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    write_files(&render_report(report), path_prefix.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{report_from_counts, Counts};

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(0.0), "0.00000");
        assert_eq!(fmt6(-0.0), "0.00000");
        assert_eq!(fmt6(1.0), "1.00000");
        assert_eq!(fmt6(86.0 / 121.0), "0.710744");
        assert_eq!(fmt6(12.3), "12.3000");
        assert_eq!(fmt6(0.04), "0.0400000");
        assert_eq!(fmt6(0.9999996), "1.00000");
        assert_eq!(fmt6(-0.5), "-0.500000");
        assert_eq!(fmt6(1234567.0), "1234567");
        assert_eq!(fmt6(2621.0 / 65535.0), "0.0399939");
    }

    #[test]
    fn empty_report_has_header_only_curves() {
        let files = render_report(&MetricsReport::default());
        assert_eq!(files[1].contents, format!("{PR_HEADER}\n"));
        assert_eq!(files[2].contents, format!("{MR_FPPI_HEADER}\n"));
    }

    #[test]
    fn fig5_shaped_summary_row() {
        let mut rep = report_from_counts(Counts {
            tp: 1234,
            fp: 502,
            fn_: 192,
        });
        rep.ap = 0.82;
        rep.ar = 0.86;
        let csv = summary_csv(&rep);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        let cells: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(cells.len(), 6);
        assert!(cells.iter().all(|c| c.parse::<f64>().is_ok()));
        assert_eq!(&cells[..2], &["502", "192"]);
        assert_eq!(cells[4], "0.820000");
    }

    #[test]
    fn prefix_concatenates() {
        assert_eq!(
            prefixed(Path::new("out/pre_"), "pr.csv"),
            PathBuf::from("out/pre_pr.csv")
        );
    }
}
