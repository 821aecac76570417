use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use segfuse::fusion::FusionConfig;
use segfuse::io::detection::{load_detection_file, save_detection_file};
use segfuse::io::pgm::save_score_map;
use segfuse::io::report::{render_heatmap_files, render_sweep, write_files, SWEEP_HEADER};
use segfuse::io::{emit_report, fmt6, DetectionSet};
use segfuse::metrics::{Counts, MetricsReport};
use segfuse::occlusion::{occlusion_heatmap, OcclusionConfig, ScorerBinding};
use segfuse::pipeline::{
    evaluate_fusion, fuse_dataset, fused_images, load_maps, merge_prediction_and_ground_truth, score_map_path,
};
use segfuse::synth::{generate_benchmark, SceneConfig};
use segfuse::tuning::{default_c_grid, select_threshold, sweep_thresholds, SelectionPolicy, SweepRow};
use segfuse::{BinaryMask, ScoreMap};
use serde_json::json;

use crate::manifest::RunManifest;
use crate::style::Style;
use crate::{Cli, Command, DataArgs};

#[derive(Debug, Args)]
pub struct OccludeArgs {
    /// Detection file holding the probed mask.
    #[arg(long, value_name = "FILE")]
    pub gt: PathBuf,
    /// Image holding the probed mask.
    #[arg(long)]
    pub image_id: u64,
    /// Ground-truth instance whose visible pixels are averaged.
    #[arg(long)]
    pub instance_id: u64,
    /// Probe a predicted instance with this id instead of a ground-truth one.
    #[arg(long)]
    pub prediction: bool,
    /// Directory with baseline.pgm and occluded_<x>_<y>.pgm per window.
    #[arg(
        long,
        value_name = "DIR",
        conflicts_with = "scorer_cmd",
        required_unless_present = "scorer_cmd"
    )]
    pub maps_dir: Option<PathBuf>,
    /// Program run once per window as `CMD IMAGE X Y W H FILL OUT`; it must
    /// write a score map to OUT. The baseline call uses a 0x0 window.
    #[arg(long, value_name = "CMD", requires = "image")]
    pub scorer_cmd: Option<String>,
    /// Image handed to the scorer command.
    #[arg(long, value_name = "FILE")]
    pub image: Option<PathBuf>,
    /// The scorer command may run several copies at once.
    #[arg(long)]
    pub reentrant: bool,
    /// Window width in pixels.
    #[arg(long, default_value_t = 96)]
    pub window_width: u32,
    /// Window height in pixels.
    #[arg(long, default_value_t = 54)]
    pub window_height: u32,
    /// Step between window origins in pixels.
    #[arg(long, default_value_t = 5)]
    pub stride: u32,
    /// Grey value painted inside the window.
    #[arg(long, default_value_t = 0.5)]
    pub fill: f64,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

fn create_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}

fn write_text(path: PathBuf, text: &str) -> Result<PathBuf> {
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn finish(cli: &Cli, out: &Path, mut manifest: RunManifest, files: &[PathBuf]) -> Result<()> {
    manifest.record_outputs(out, files)?;
    let path = cli.manifest_out.clone().unwrap_or_else(|| out.join("manifest.json"));
    manifest.write(&path)?;
    let style = Style::for_stderr();
    eprintln!(
        "{} wrote {} files to {}, manifest {}",
        style.ok("done:"),
        files.len(),
        out.display(),
        path.display()
    );
    Ok(())
}

struct Loaded {
    set: DetectionSet,
    maps: Vec<ScoreMap>,
    inputs: Vec<PathBuf>,
}

fn load_data(data: &DataArgs) -> Result<Loaded> {
    let preds = load_detection_file(&data.pred)?;
    let gts = match &data.gt {
        Some(gt) if gt != &data.pred => load_detection_file(gt)?,
        _ => preds.clone(),
    };
    let set = merge_prediction_and_ground_truth(preds, gts, &data.pred)?;
    let maps = load_maps(&data.maps, &set)?;
    let mut inputs = vec![data.pred.clone()];
    inputs.extend(data.gt.clone());
    inputs.push(data.maps.clone());
    Ok(Loaded { set, maps, inputs })
}

fn input_refs(inputs: &[PathBuf]) -> Vec<&Path> {
    inputs.iter().map(PathBuf::as_path).collect()
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Fuse { data, fusion, out } => fuse(cli, data, fusion.threshold, out),
        Command::Eval { data, fusion, iou, out } => eval(cli, data, fusion.threshold, *iou, out),
        Command::Tune {
            data,
            iou,
            grid,
            max_recall_drop,
            out,
        } => tune(cli, data, *iou, grid.clone(), *max_recall_drop, out),
        Command::Occlude(args) => occlude(cli, args),
        Command::Synth {
            scenes,
            seed,
            width,
            height,
            fusion,
            out,
        } => synth(cli, *scenes, *seed, *width, *height, fusion.threshold, out),
    }
}

fn fuse(cli: &Cli, data: &DataArgs, c: f64, out: &Path) -> Result<()> {
    let cfg = FusionConfig::with_threshold(c)?;
    let loaded = load_data(data)?;
    let results = fuse_dataset(&loaded.set.entries, &loaded.maps, &cfg)?;

    let fused = DetectionSet {
        images: loaded.set.images.clone(),
        entries: fused_images(&loaded.set.entries, &results),
    };
    let mut rejected = String::from("image_id,instance_id,mean_score\n");
    let mut n_rejected = 0;
    for (entry, r) in loaded.set.entries.iter().zip(&results) {
        for rej in &r.rejected {
            n_rejected += 1;
            let score = rej.mean_score.map(fmt6).unwrap_or_default();
            writeln!(rejected, "{},{},{score}", entry.image_id, rej.instance.instance_id)?;
        }
    }

    create_out(out)?;
    let fused_path = out.join("fused.json");
    save_detection_file(&fused, &fused_path)?;
    let files = vec![fused_path, write_text(out.join("rejected.csv"), &rejected)?];

    let kept: usize = results.iter().map(|r| r.accepted.len()).sum();
    println!("kept {kept}, rejected {n_rejected} at c = {}", fmt6(c));

    let mut manifest = RunManifest::new(
        "fuse",
        json!({ "threshold": c, "empty_mask_policy": "reject" }),
        &input_refs(&loaded.inputs),
        None,
    );
    manifest.results = json!({ "kept": kept, "rejected": n_rejected });
    finish(cli, out, manifest, &files)
}

fn print_reports(pre: &MetricsReport, post: &MetricsReport) {
    let style = Style::for_stdout();
    println!(
        "{}",
        style.bold(&format!(
            "{:<8}{:>8}{:>8}{:>11}{:>9}{:>9}{:>9}",
            "", "FP", "FN", "precision", "recall", "AP", "AR"
        ))
    );
    for (name, r) in [("before", pre), ("after", post)] {
        println!(
            "{name:<8}{:>8}{:>8}{:>11.4}{:>9.4}{:>9.4}{:>9.4}",
            r.counts.fp, r.counts.fn_, r.precision, r.recall, r.ap, r.ar
        );
    }
}

fn eval(cli: &Cli, data: &DataArgs, c: f64, iou: f64, out: &Path) -> Result<()> {
    let cfg = FusionConfig::with_threshold(c)?;
    let loaded = load_data(data)?;
    let outcome = evaluate_fusion(&loaded.set.entries, &loaded.maps, &cfg, iou)?;

    create_out(out)?;
    let mut files = emit_report(&outcome.unfused, out.join("pre_"))?;
    files.extend(emit_report(&outcome.fused, out.join("post_"))?);
    print_reports(&outcome.unfused, &outcome.fused);

    let mut manifest = RunManifest::new(
        "eval",
        json!({ "threshold": c, "iou": iou }),
        &input_refs(&loaded.inputs),
        None,
    );
    let summary = |r: &MetricsReport| {
        json!({
            "tp": r.counts.tp, "fp": r.counts.fp, "fn": r.counts.fn_,
            "precision": r.precision, "recall": r.recall, "ap": r.ap, "ar": r.ar,
        })
    };
    manifest.results = json!({ "pre": summary(&outcome.unfused), "post": summary(&outcome.fused) });
    finish(cli, out, manifest, &files)
}

fn tune(cli: &Cli, data: &DataArgs, iou: f64, grid: Option<Vec<f64>>, drop: f64, out: &Path) -> Result<()> {
    let policy = SelectionPolicy::new(drop)?;
    let grid = grid.unwrap_or_else(default_c_grid);
    let loaded = load_data(data)?;
    let table = sweep_thresholds(&loaded.set.entries, &loaded.maps, &grid, iou)?;
    let c = select_threshold(&table, &policy)?;
    let row: &SweepRow = table
        .rows()
        .iter()
        .find(|r| r.c == c)
        .expect("the selected threshold comes from the table");

    create_out(out)?;
    let mut files = write_files(&render_sweep(&table), &out.join(""))?;
    let selected = format!(
        "{SWEEP_HEADER}\n{},{},{},{},{}\n",
        fmt6(row.c),
        fmt6(row.precision),
        fmt6(row.recall),
        row.fp,
        row.fn_
    );
    files.push(write_text(out.join("selected.csv"), &selected)?);
    println!(
        "selected c = {} (precision {}, recall {}, FP {})",
        fmt6(c),
        fmt6(row.precision),
        fmt6(row.recall),
        row.fp
    );

    let mut manifest = RunManifest::new(
        "tune",
        json!({ "iou": iou, "grid": grid, "max_recall_drop": drop }),
        &input_refs(&loaded.inputs),
        None,
    );
    manifest.results = json!({ "selected_c": c });
    finish(cli, out, manifest, &files)
}

fn probed_mask(args: &OccludeArgs) -> Result<BinaryMask> {
    let set = load_detection_file(&args.gt)?;
    let Some(entry) = set.entries.iter().find(|e| e.image_id == args.image_id) else {
        return Err(segfuse::Error::InvalidConfig(format!(
            "image {} not found in {}",
            args.image_id,
            args.gt.display()
        ))
        .into());
    };
    let mask = if args.prediction {
        entry
            .predictions
            .iter()
            .find(|p| p.instance_id == args.instance_id)
            .map(|p| p.mask.clone())
    } else {
        entry
            .ground_truths
            .iter()
            .find(|g| g.gt_id == args.instance_id)
            .map(|g| g.mask().clone())
    };
    let kind = if args.prediction {
        "prediction"
    } else {
        "ground-truth instance"
    };
    mask.ok_or_else(|| {
        segfuse::Error::InvalidConfig(format!(
            "{kind} {} not found in image {}",
            args.instance_id, args.image_id
        ))
        .into()
    })
}

fn occlude(cli: &Cli, args: &OccludeArgs) -> Result<()> {
    let cfg = OcclusionConfig {
        window_width: args.window_width,
        window_height: args.window_height,
        stride: args.stride,
        fill_value: args.fill,
    };
    let mask = probed_mask(args)?;
    cfg.validate(mask.width(), mask.height())?;

    create_out(&args.out)?;
    let scratch = args.out.join(".scorer");
    let binding = match (&args.maps_dir, &args.scorer_cmd) {
        (Some(dir), _) => ScorerBinding::precomputed(dir),
        (None, Some(cmd)) => {
            fs::create_dir_all(&scratch).with_context(|| format!("creating {}", scratch.display()))?;
            let image = args.image.clone().expect("clap requires --image with --scorer-cmd");
            ScorerBinding::external(cmd.clone(), image, &scratch, args.reentrant)
        }
        (None, None) => bail!("either --maps-dir or --scorer-cmd is required"),
    };
    let heat = occlusion_heatmap(&mask, &binding, &cfg);
    if scratch.exists() {
        let _ = fs::remove_dir_all(&scratch);
    }
    let heat = heat?;

    let files = write_files(&render_heatmap_files(&heat), &args.out.join(""))?;
    let defined = heat.values().iter().flatten().count();
    let (lo, hi) = heat
        .values()
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    println!(
        "{}x{} window positions, {defined} with visible pixels, delta range [{}, {}]",
        heat.grid_width(),
        heat.grid_height(),
        fmt6(if defined > 0 { lo } else { 0.0 }),
        fmt6(if defined > 0 { hi } else { 0.0 })
    );

    let mut inputs = vec![args.gt.as_path()];
    inputs.extend(args.maps_dir.as_deref());
    inputs.extend(args.image.as_deref());
    let mut manifest = RunManifest::new(
        "occlude",
        json!({
            "image_id": args.image_id,
            "instance_id": args.instance_id,
            "source": if args.prediction { "prediction" } else { "ground_truth" },
            "scorer": binding,
            "window_width": cfg.window_width,
            "window_height": cfg.window_height,
            "stride": cfg.stride,
            "fill": cfg.fill_value,
        }),
        &inputs,
        None,
    );
    // The scratch directory is an implementation detail of this run.
    if let Some(cfg) = manifest.config.get_mut("scorer") {
        cfg["work_dir"] = serde_json::Value::Null;
    }
    manifest.results = json!({ "grid_width": heat.grid_width(), "grid_height": heat.grid_height() });
    finish(cli, &args.out, manifest, &files)
}

fn synth(cli: &Cli, scenes: u32, seed: u64, width: u32, height: u32, c: f64, out: &Path) -> Result<()> {
    let cfg = SceneConfig {
        seed,
        ..SceneConfig::with_size(width, height)
    };
    FusionConfig::with_threshold(c)?;
    let bundles = generate_benchmark(&cfg, scenes)?;
    let mut pre = Counts::default();
    let mut post = Counts::default();
    for b in &bundles {
        pre += b.expected(0.0)?.counts;
        post += b.expected(c)?.counts;
    }

    create_out(out)?;
    let maps_dir = out.join("maps");
    fs::create_dir_all(&maps_dir).with_context(|| format!("creating {}", maps_dir.display()))?;
    let mut set = DetectionSet::default();
    let mut files = Vec::new();
    for b in &bundles {
        set.push(b.image_info(), b.eval_image());
        let path = score_map_path(&maps_dir, b.image_id);
        save_score_map(&b.score_map, &path)?;
        files.push(path);
    }
    let det = out.join("detections.json");
    save_detection_file(&set, &det)?;
    files.push(det);

    let mut expected = String::from("stage,c,tp,fp,fn,precision,recall\n");
    for (stage, stage_c, k) in [("pre", 0.0, pre), ("post", c, post)] {
        writeln!(
            expected,
            "{stage},{},{},{},{},{},{}",
            fmt6(stage_c),
            k.tp,
            k.fp,
            k.fn_,
            fmt6(k.precision()),
            fmt6(k.recall())
        )?;
    }
    files.push(write_text(out.join("expected.csv"), &expected)?);
    println!(
        "{scenes} scenes; expected precision {} -> {}, recall {} -> {} at c = {}",
        fmt6(pre.precision()),
        fmt6(post.precision()),
        fmt6(pre.recall()),
        fmt6(post.recall()),
        fmt6(c)
    );

    let mut manifest = RunManifest::new(
        "synth",
        json!({ "scenes": scenes, "scene": cfg, "threshold": c }),
        &[],
        Some(seed),
    );
    manifest.results = json!({
        "pre": { "tp": pre.tp, "fp": pre.fp, "fn": pre.fn_ },
        "post": { "tp": post.tp, "fp": post.fp, "fn": post.fn_ },
    });
    finish(cli, out, manifest, &files)
}
