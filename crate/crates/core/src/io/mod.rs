//! File formats: detection JSON, 16-bit greymap score maps, CSV/SVG reports.

pub mod detection;
pub mod pgm;
pub mod report;
pub mod svg;

pub use detection::{load_detection_file, save_detection_file, DetectionSet, ImageInfo};
pub use pgm::{load_score_map, save_score_map};
pub use report::{emit_report, fmt6};
