mod common;

use std::fs;

use rand::Rng;
use segfuse::fusion::{fuse_instances, FusionConfig};
use segfuse::io::detection::{detection_file_json, load_detection_file, parse_detection_file, save_detection_file};
use segfuse::io::pgm::{load_score_map, save_score_map};
use segfuse::io::{emit_report, DetectionSet};
use segfuse::metrics::{evaluate, match_detections, Counts};
use segfuse::pipeline::{evaluate_fusion, run_eval_pipeline, score_map_path};
use segfuse::synth::{expected_metrics, generate_benchmark, generate_scene, SceneConfig};
use segfuse::tuning::{default_c_grid, select_threshold, sweep_thresholds, SelectionPolicy};
use segfuse::{Error, ErrorClass, ScoreMap};

fn random_config(seed: u64) -> (SceneConfig, f64) {
    let mut rng = common::rng(seed);
    let true_score = rng.random_range(0.3..0.95);
    let refl_score = rng.random_range(0.0..0.1);
    // Keep the midpoint at least six noise sigmas from both scores.
    let noise = rng.random_range(0.0..=(true_score - refl_score) / 12.0);
    let cfg = SceneConfig {
        true_count: rng.random_range(0..=6),
        reflection_count: rng.random_range(0..=6),
        semantic_score_true: true_score,
        semantic_score_reflection: refl_score,
        semantic_noise: noise,
        seed: rng.random(),
        ..SceneConfig::with_size(240, 135)
    };
    (cfg, (true_score + refl_score) / 2.0)
}

#[test]
fn fused_metrics_match_closed_form_over_random_configs() {
    for seed in 0..100 {
        let (cfg, c) = random_config(seed);
        let scene = generate_scene(&cfg).unwrap();
        let fused = fuse_instances(
            &scene.predictions,
            &scene.score_map,
            &FusionConfig::with_threshold(c).unwrap(),
        )
        .unwrap();
        let got = match_detections(&fused.accepted, &scene.ground_truths, 0.5)
            .unwrap()
            .counts();
        let want = expected_metrics(&cfg, c).unwrap();
        assert_eq!(got, want.counts, "seed {seed}");

        let unfused = match_detections(&scene.predictions, &scene.ground_truths, 0.5)
            .unwrap()
            .counts();
        assert_eq!(unfused, expected_metrics(&cfg, 0.0).unwrap().counts, "seed {seed}");
    }
}

#[test]
fn default_benchmark_at_default_threshold() {
    let scenes = generate_benchmark(&SceneConfig::default(), 10).unwrap();
    let images: Vec<_> = scenes.iter().map(|s| s.eval_image()).collect();
    let maps: Vec<ScoreMap> = scenes.iter().map(|s| s.score_map.clone()).collect();
    let out = evaluate_fusion(&images, &maps, &FusionConfig::default(), 0.5).unwrap();
    assert_eq!(out.unfused.counts, Counts { tp: 50, fp: 50, fn_: 0 });
    assert_eq!(out.fused.counts, Counts { tp: 50, fp: 0, fn_: 0 });
    assert_eq!((out.unfused.precision, out.fused.precision), (0.5, 1.0));
}

#[test]
fn sweep_on_benchmark_is_monotone_and_selects_inside_the_gap() {
    let cfg = SceneConfig::default();
    let scenes = generate_benchmark(&cfg, 10).unwrap();
    let images: Vec<_> = scenes.iter().map(|s| s.eval_image()).collect();
    let maps: Vec<ScoreMap> = scenes.iter().map(|s| s.score_map.clone()).collect();
    let table = sweep_thresholds(&images, &maps, &default_c_grid(), 0.5).unwrap();
    for w in table.rows().windows(2) {
        assert!(w[0].c < w[1].c);
        assert!(w[1].fp <= w[0].fp);
        assert!(w[1].recall <= w[0].recall);
    }
    let c = select_threshold(&table, &SelectionPolicy::default()).unwrap();
    assert!(
        c > cfg.semantic_score_reflection && c < cfg.semantic_score_true,
        "selected {c}"
    );
    let fusion = FusionConfig::with_threshold(c).unwrap();
    for s in &scenes {
        let fused = fuse_instances(&s.predictions, &s.score_map, &fusion).unwrap();
        let true_ids: Vec<u64> = (0..cfg.true_count as u64).collect();
        let kept: Vec<u64> = fused.accepted.iter().map(|p| p.instance_id).collect();
        assert_eq!(kept, true_ids);
    }
}

fn synth_set(scenes: u32) -> (DetectionSet, Vec<ScoreMap>) {
    let bundles = generate_benchmark(&SceneConfig::with_size(160, 90), scenes).unwrap();
    let mut set = DetectionSet::default();
    let mut maps = Vec::new();
    for b in bundles {
        set.push(b.image_info(), b.eval_image());
        maps.push(b.score_map);
    }
    (set, maps)
}

#[test]
fn detection_file_round_trips_exactly() {
    let (set, _) = synth_set(3);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("det.json");
    save_detection_file(&set, &path).unwrap();
    let back = load_detection_file(&path).unwrap();
    assert_eq!(back, set);
    assert_eq!(detection_file_json(&back), fs::read_to_string(&path).unwrap());
}

#[test]
fn score_map_double_round_trip_is_exact() {
    let (_, maps) = synth_set(2);
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"));
    save_score_map(&maps[0], &a).unwrap();
    let once = load_score_map(&a).unwrap();
    for (x, y) in maps[0].values().iter().zip(once.values()) {
        assert!((x - y).abs() <= 1.0 / 131_070.0);
    }
    save_score_map(&once, &b).unwrap();
    assert_eq!(load_score_map(&b).unwrap(), once);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn report_emission_is_byte_stable() {
    let (set, _) = synth_set(3);
    let report = evaluate(&set.entries, 0.5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = emit_report(&report, dir.path().join("one")).unwrap();
    let second = emit_report(&report, dir.path().join("two")).unwrap();
    assert_eq!(first.len(), 5);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap(), "{}", a.display());
    }
}

fn write_dataset(dir: &std::path::Path, set: &DetectionSet, maps: &[ScoreMap]) -> std::path::PathBuf {
    let det = dir.join("det.json");
    save_detection_file(set, &det).unwrap();
    let maps_dir = dir.join("maps");
    fs::create_dir_all(&maps_dir).unwrap();
    for (info, map) in set.images.iter().zip(maps) {
        save_score_map(map, score_map_path(&maps_dir, info.id)).unwrap();
    }
    det
}

#[test]
fn pipeline_from_disk() {
    let (set, maps) = synth_set(4);
    let dir = tempfile::tempdir().unwrap();
    let det = write_dataset(dir.path(), &set, &maps);
    let maps_dir = dir.path().join("maps");

    let out = run_eval_pipeline(&det, &det, &maps_dir, 0.04, 0.5).unwrap();
    assert_eq!(out.unfused.counts, Counts { tp: 20, fp: 20, fn_: 0 });
    assert_eq!(out.fused.counts, Counts { tp: 20, fp: 0, fn_: 0 });

    // At c = 0 nothing is removed.
    let same = run_eval_pipeline(&det, &det, &maps_dir, 0.0, 0.5).unwrap();
    assert_eq!(same.unfused, same.fused);
}

#[test]
fn missing_score_map_names_the_image() {
    let (set, maps) = synth_set(3);
    let dir = tempfile::tempdir().unwrap();
    let det = write_dataset(dir.path(), &set, &maps);
    fs::remove_file(score_map_path(&dir.path().join("maps"), 2)).unwrap();
    let err = run_eval_pipeline(&det, &det, &dir.path().join("maps"), 0.04, 0.5).unwrap_err();
    assert!(matches!(err, Error::MissingScoreMap { image_id: 2, .. }));
    assert!(err.to_string().contains('2'));
}

#[test]
fn malformed_detection_file_is_a_parse_error_with_position() {
    let err = parse_detection_file("{\n  \"images\": [,]\n}", std::path::Path::new("x.json")).unwrap_err();
    assert_eq!(err.class(), ErrorClass::Parse);
    assert!(matches!(err, Error::Parse { line: 2, .. }));
}

#[test]
fn rle_sum_mismatch_names_image_and_instance() {
    let text = r#"{"images":[{"id":7,"width":2,"height":2}],"annotations":[
        {"image_id":7,"instance_id":3,"category_id":1,"segmentation":{"counts":[1,2],"size":[2,2]}}]}"#;
    let err = parse_detection_file(text, std::path::Path::new("x.json")).unwrap_err();
    assert!(matches!(
        err,
        Error::RleLengthMismatch {
            image_id: 7,
            instance_id: 3,
            ..
        }
    ));
}
