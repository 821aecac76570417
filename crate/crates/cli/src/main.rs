mod commands;
mod manifest;
mod style;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ColorChoice, CommandFactory, FromArgMatches, Parser, Subcommand};
use segfuse::fusion::DEFAULT_THRESHOLD;
use segfuse::metrics::DEFAULT_IOU_THRESHOLD;
use segfuse::ErrorClass;

use style::{no_color_requested, Style, NO_COLOR_ENV};

/// Suppress reflection false positives in instance segmentation by fusing
/// each predicted mask with a semantic score map, and measure the effect.
#[derive(Debug, Parser)]
#[command(name = "segfuse", version, after_help = after_help())]
pub struct Cli {
    /// Worker threads for per-image work [default: available parallelism].
    /// Outputs do not depend on this value.
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    pub jobs: Option<u32>,

    /// Where to write the run manifest [default: <OUT>/manifest.json].
    #[arg(long, global = true, value_name = "PATH")]
    pub manifest_out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

fn after_help() -> String {
    format!(
        "Environment:\n  {NO_COLOR_ENV}  set to disable terminal colours\n\n\
         Exit status: 0 success, 1 I/O failure, 2 malformed input, 3 invalid \
         input or settings, 4 scorer failure."
    )
}

#[derive(Debug, Clone, clap::Args)]
pub struct FusionArgs {
    /// Minimum mean semantic score for a predicted mask to be kept.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD, value_name = "C")]
    pub threshold: f64,
}

#[derive(Debug, Clone, clap::Args)]
pub struct DataArgs {
    /// Detection file with predictions (annotations carrying a confidence).
    #[arg(long, value_name = "FILE")]
    pub pred: PathBuf,

    /// Detection file with ground truth [default: the prediction file].
    #[arg(long, value_name = "FILE")]
    pub gt: Option<PathBuf>,

    /// Directory of score maps named `<image id>.pgm`.
    #[arg(long, value_name = "DIR")]
    pub maps: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep predictions whose mean in-mask semantic score reaches the
    /// threshold; writes fused.json and rejected.csv.
    Fuse {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fusion: FusionArgs,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Report metrics before and after fusion; writes pre_* and post_*
    /// summary.csv, pr.csv, mr_fppi.csv, pr.svg and mr_fppi.svg.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fusion: FusionArgs,
        /// IoU needed for a prediction to match a ground-truth mask.
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD, value_name = "IOU")]
        iou: f64,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Sweep the fusion threshold and pick one; writes sweep.csv, sweep.svg
    /// and selected.csv.
    Tune {
        #[command(flatten)]
        data: DataArgs,
        /// IoU needed for a prediction to match a ground-truth mask.
        #[arg(long, default_value_t = DEFAULT_IOU_THRESHOLD, value_name = "IOU")]
        iou: f64,
        /// Thresholds to try, comma separated [default: 0, 0.005, ..., 0.2].
        #[arg(long, value_delimiter = ',', value_name = "C,...")]
        grid: Option<Vec<f64>>,
        /// Largest recall loss, relative to the best row, the selection may
        /// accept in exchange for precision.
        #[arg(long, default_value_t = 0.01, value_name = "R")]
        max_recall_drop: f64,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Slide a grey window over the image and record how the mean score over
    /// the visible part of one mask changes; writes heatmap.csv and
    /// heatmap.svg.
    Occlude(commands::OccludeArgs),
    /// Generate a synthetic mirror benchmark with known expected metrics;
    /// writes detections.json, maps/<id>.pgm and expected.csv.
    Synth {
        /// Number of scenes.
        #[arg(long, default_value_t = 100)]
        scenes: u32,
        /// Base seed; scene seeds derive from it.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Image width in pixels.
        #[arg(long, default_value_t = 480)]
        width: u32,
        /// Image height in pixels.
        #[arg(long, default_value_t = 270)]
        height: u32,
        // Threshold the expected post-fusion counts are computed for.
        #[command(flatten)]
        fusion: FusionArgs,
        /// Output directory.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let class = err
        .chain()
        .find_map(|e| e.downcast_ref::<segfuse::Error>())
        .map(segfuse::Error::class);
    match class {
        Some(ErrorClass::Parse) => 2,
        Some(ErrorClass::Invariant) => 3,
        Some(ErrorClass::Scorer) => 4,
        Some(ErrorClass::Io) | None => 1,
    }
}

/// The error chain joined with ": ", skipping causes the previous message
/// already ends with.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    let color = if no_color_requested() {
        ColorChoice::Never
    } else {
        ColorChoice::Auto
    };
    let matches = Cli::command().color(color).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("{} {e}", Style::for_stderr().error("error:"));
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{} {}", Style::for_stderr().error("error:"), describe(&err));
            ExitCode::from(exit_code(&err))
        }
    }
}
