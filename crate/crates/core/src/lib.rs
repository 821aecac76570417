//! Fusion of instance-segmentation proposals with semantic score maps, plus
//! the evaluation tooling around it: detection metrics, threshold sweeps,
//! occlusion sensitivity maps and a synthetic mirror-scene benchmark.
//!
//! An instance proposal is kept when the mean semantic "person" score inside
//! its mask reaches a threshold `c` (0.04 by default); otherwise it is
//! discarded as a likely reflection.

pub mod error;
pub mod fusion;
pub mod io;
pub mod mask;
pub mod metrics;
pub mod occlusion;
pub mod pipeline;
pub mod synth;
pub mod tuning;

pub use error::{Error, ErrorClass, Result};
pub use fusion::{fuse_instances, FusionConfig, FusionResult, InstancePrediction};
pub use mask::{mask_iou, mean_score_in_mask, rle_decode, rle_encode, BinaryMask, RunLengthEncoding, ScoreMap};
pub use metrics::{EvalImage, GroundTruthInstance, MetricsReport};
