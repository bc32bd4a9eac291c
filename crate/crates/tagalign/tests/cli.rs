mod common;

use common::*;
use tagalign::ingest::{write_feature_archive, write_slam_export, SlamPoint};
use tagalign::report::{to_json, AlignmentReport, MetricsReport, TagReport, TruthManifest};
use tagalign_core::geometry::axis_angle_rotation;
use tagalign_core::{BinaryDescriptor, CloudLabel, FloatDescriptor, HomogeneousTransform, Point3};

#[test]
fn synth_default_inventory_and_determinism() {
    let root = tempfile::tempdir().unwrap();
    let a = synth(root.path(), "a", "");
    let b = synth(root.path(), "b", "");
    let files = tree(&a);
    let names: Vec<String> = files.iter().map(|(p, _)| p.to_string_lossy().into_owned()).collect();
    for expected in [
        "slam/map.txt",
        "sfm/reconstruction.json",
        "sfm/tracks.csv",
        "sfm/merge.ply",
        "sfm/features/img_0000.jpg.feat1",
        "sfm/features/img_0010.jpg.feat1",
        "tags/tag0.maptxt",
        "tags/tag5.feat1",
        "truth.json",
        "pipeline.toml",
        "eval.toml",
    ] {
        assert!(names.iter().any(|n| n == expected), "missing {expected}");
    }
    assert_eq!(files, tree(&b));
    let c = synth(root.path(), "c", "seed = 1\n");
    assert_ne!(std::fs::read(a.join("slam/map.txt")).unwrap(), std::fs::read(c.join("slam/map.txt")).unwrap());
}

#[test]
fn synth_rejects_three_tags_and_unknown_keys() {
    let root = tempfile::tempdir().unwrap();
    for (i, text) in ["n_tags = 3\n", "n_tag = 6\n", "seed = -1\n"].iter().enumerate() {
        let cfg = root.path().join(format!("bad{i}.toml"));
        std::fs::write(&cfg, text).unwrap();
        let out = run(&["synth", "--config", s(&cfg), "--out", s(&root.path().join("x"))]);
        assert_eq!(code(&out), 1, "{text}: {}", stderr(&out));
    }
    assert!(!root.path().join("x").exists());
}

#[test]
fn full_pipeline_is_idempotent() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 11);
    let cfg = dir.join("pipeline.toml");
    for _ in 0..2 {
        assert_eq!(code(&run(&["localize", "--config", s(&cfg)])), 0);
        assert_eq!(code(&run(&["align", "--config", s(&cfg)])), 0);
    }
    let first = tree(&dir.join("out"));
    assert_eq!(first.len(), 4);
    assert_eq!(code(&run(&["localize", "--config", s(&cfg)])), 0);
    assert_eq!(code(&run(&["align", "--config", s(&cfg)])), 0);
    assert_eq!(tree(&dir.join("out")), first);
    let report: TagReport = serde_json::from_slice(&std::fs::read(dir.join("out/tags_sfm.json")).unwrap()).unwrap();
    assert_eq!(report.tags.len(), 6);
    assert_eq!(report.join.unwrap().excluded_points, 0);
}

#[test]
fn missing_tracks_file_exits_1() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 2);
    std::fs::remove_file(dir.join("sfm/tracks.csv")).unwrap();
    let out = run(&["localize", "--config", s(&dir.join("pipeline.toml"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("tracks.csv"));
    assert_eq!(code(&run(&["localize", "--config", s(&root.path().join("nope.toml"))])), 1);
}

#[test]
fn parse_errors_name_file_and_line() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 2);
    let map = dir.join("slam/map.txt");
    let mut text = std::fs::read_to_string(&map).unwrap();
    text.push_str("99999 1 2 3 0 0\n");
    let line = text.lines().count();
    std::fs::write(&map, text).unwrap();
    let out = run(&["localize", "--config", s(&dir.join("pipeline.toml"))]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("map.txt") && err.contains(&format!("line {line}")), "{err}");
}

/// Replaces a tag's archives with descriptors that match nothing.
fn blind_tag(dir: &std::path::Path, id: &str) {
    let queries: Vec<SlamPoint> = (0..8)
        .map(|i| SlamPoint {
            point_id: i,
            coord: Point3::ORIGIN,
            descriptor: BinaryDescriptor::ONES,
        })
        .collect();
    std::fs::write(dir.join(format!("tags/{id}.maptxt")), write_slam_export(&queries)).unwrap();
    let far: Vec<FloatDescriptor> = (0..8).map(|_| FloatDescriptor::new(vec![1e3; 128]).unwrap()).collect();
    std::fs::write(dir.join(format!("tags/{id}.feat1")), write_feature_archive(&far, 128).unwrap()).unwrap();
}

#[test]
fn three_recoverable_tags_exit_2_with_reports() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 4);
    for id in ["tag1", "tag3", "tag5"] {
        blind_tag(&dir, id);
    }
    let cfg = dir.join("pipeline.toml");
    let out = run(&["localize", "--config", s(&cfg)]);
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    for name in ["tags_slam.json", "tags_sfm.json"] {
        let r: TagReport = serde_json::from_slice(&std::fs::read(dir.join("out").join(name)).unwrap()).unwrap();
        assert_eq!(r.tags.iter().map(|t| t.tag_id.as_str()).collect::<Vec<_>>(), ["tag0", "tag2", "tag4"]);
        assert_eq!(r.misses.len(), 3);
    }
    assert_eq!(code(&run(&["align", "--config", s(&cfg)])), 2);
}

#[test]
fn fewer_than_four_configured_tags_exit_2() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 4);
    let cfg = std::fs::read_to_string(dir.join("pipeline.toml")).unwrap();
    let cut = cfg.find("\n[[tags]]\nid = \"tag3\"").unwrap();
    std::fs::write(dir.join("three.toml"), &cfg[..cut]).unwrap();
    assert_eq!(code(&run(&["localize", "--config", s(&dir.join("three.toml"))])), 2);
}

fn write_reports(dir: &std::path::Path, slam: &TagReport, sfm: &TagReport) -> (String, String) {
    let (a, b) = (dir.join("slam_in.json"), dir.join("sfm_in.json"));
    std::fs::write(&a, to_json(slam)).unwrap();
    std::fs::write(&b, to_json(sfm)).unwrap();
    (s(&a).to_string(), s(&b).to_string())
}

#[test]
fn align_from_reports_exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 6);
    let cfg = dir.join("pipeline.toml");
    let h = HomogeneousTransform::from_affine_rows([[2.0, 0.0, 0.0, 1.0], [0.0, 2.0, 0.0, 0.0], [0.0, 0.0, 2.0, -1.0]])
        .unwrap();
    let moved = |pts: &[(&'static str, [f64; 3])]| -> Vec<(&'static str, [f64; 3])> {
        pts.iter().map(|(id, p)| (*id, h.apply(&Point3::from(*p)).to_array())).collect()
    };
    let align = |slam: &TagReport, sfm: &TagReport, method: &str| {
        let (a, b) = write_reports(&dir, slam, sfm);
        code(&run(&["align", "--config", s(&cfg), "--slam-tags", &a, "--sfm-tags", &b, "--method", method]))
    };

    let spread = [("a", [0.0, 0.0, 0.0]), ("b", [1.0, 0.0, 0.0]), ("c", [0.0, 1.0, 0.0]), ("d", [0.0, 0.0, 1.0])];
    let slam = tag_report(CloudLabel::Slam, &spread);
    assert_eq!(align(&slam, &tag_report(CloudLabel::Sfm, &moved(&spread)), "dlt"), 0);
    let report: AlignmentReport =
        serde_json::from_slice(&std::fs::read(dir.join("out/alignment.json")).unwrap()).unwrap();
    assert!(report.transform().unwrap().max_abs_diff(&h) < 1e-12);
    assert_eq!(report.tags_used, ["a", "b", "c", "d"]);

    let mut three = moved(&spread);
    three[3].0 = "z";
    assert_eq!(align(&slam, &tag_report(CloudLabel::Sfm, &three), "dlt"), 2);

    let flat = [("a", [0.0, 0.0, 0.0]), ("b", [1.0, 0.0, 0.0]), ("c", [0.0, 1.0, 0.0]), ("d", [1.0, 1.0, 0.0])];
    for method in ["dlt", "similarity"] {
        let code = align(&tag_report(CloudLabel::Slam, &flat), &tag_report(CloudLabel::Sfm, &moved(&flat)), method);
        assert_eq!(code, if method == "dlt" { 3 } else { 0 }, "{method}");
    }
    let line = [("a", [0.0, 0.0, 0.0]), ("b", [1.0, 0.0, 0.0]), ("c", [2.0, 0.0, 0.0]), ("d", [3.0, 0.0, 0.0])];
    assert_eq!(align(&tag_report(CloudLabel::Slam, &line), &tag_report(CloudLabel::Sfm, &moved(&line)), "similarity"), 3);
}

fn eval(dir: &std::path::Path, report: &AlignmentReport, gates: &str) -> (i32, MetricsReport) {
    let rp = dir.join("candidate.json");
    std::fs::write(&rp, to_json(report)).unwrap();
    let cfg = dir.join("gated.toml");
    std::fs::write(
        &cfg,
        format!("manifest = \"truth.json\"\nreport = \"candidate.json\"\noutput_dir = \"eval_out\"\n[gates]\n{gates}"),
    )
    .unwrap();
    let out = run(&["eval", "--config", s(&cfg)]);
    let metrics = serde_json::from_slice(&std::fs::read(dir.join("eval_out/metrics.json")).unwrap()).unwrap();
    (code(&out), metrics)
}

#[test]
fn eval_gates() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 8);
    let manifest: TruthManifest = serde_json::from_slice(&std::fs::read(dir.join("truth.json")).unwrap()).unwrap();
    let ids: Vec<String> = manifest.tags.iter().map(|t| t.tag_id.clone()).collect();
    let perfect = AlignmentReport {
        method: "dlt".into(),
        direction: tagalign::config::Direction::SlamToSfm,
        matrix: manifest.transform.clone(),
        per_tag_residuals: Default::default(),
        rmse: 0.0,
        singular_values: None,
        tags_used: ids.clone(),
    };
    let gates = "max_rotation_error_rad = 0.01\nmax_scale_error_rel = 0.01\nmax_translation_error = 0.01\nmax_tag_centroid_rmse = 0.01\nmin_tags_recovered = 6\n";
    let (c, m) = eval(&dir, &perfect, gates);
    assert_eq!(c, 0);
    assert!(m.passed);
    // rotation and scale pass through an SVD, so they are zero up to rounding
    assert!(m.metrics.rotation_error_rad.unwrap() < 1e-12);
    assert!(m.metrics.scale_error_rel.unwrap() < 1e-12);
    assert_eq!(m.metrics.translation_error, 0.0);
    assert_eq!(m.metrics.max_entry_error, 0.0);
    assert_eq!(m.metrics.tag_centroid_rmse, 0.0);

    // rotate the recovered transform by 0.1 rad about its own translation point
    let truth = perfect.transform().unwrap();
    let mut extra = nalgebra::Matrix4::identity();
    extra.fixed_view_mut::<3, 3>(0, 0).copy_from(&axis_angle_rotation([0.3, -1.0, 0.5], 0.1));
    let rotated = HomogeneousTransform::new(truth.matrix() * extra).unwrap();
    let bad = AlignmentReport {
        matrix: rotated.to_row_major().to_vec(),
        ..perfect.clone()
    };
    let (c, m) = eval(&dir, &bad, "max_rotation_error_rad = 0.01\n");
    assert_eq!(c, 4);
    assert!((m.metrics.rotation_error_rad.unwrap() - 0.1).abs() < 1e-9);
    assert_eq!(eval(&dir, &bad, "max_rotation_error_rad = 0.2\n").0, 0);

    std::fs::rename(dir.join("truth.json"), dir.join("moved.json")).unwrap();
    let out = run(&["eval", "--config", s(&dir.join("gated.toml"))]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("truth.json"));
}

#[test]
fn reverse_direction_and_similarity_method() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 9);
    let cfg = dir.join("pipeline.toml");
    let out = run(&["align", "--config", s(&cfg), "--direction", "sfm-to-slam", "--method", "similarity"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let report: AlignmentReport =
        serde_json::from_slice(&std::fs::read(dir.join("out/alignment.json")).unwrap()).unwrap();
    assert_eq!(report.method, "similarity");
    assert_eq!(report.singular_values, None);
    let out = run(&["eval", "--config", s(&dir.join("eval.toml"))]);
    assert_eq!(code(&out), 0);
    let m: MetricsReport = serde_json::from_slice(&std::fs::read(dir.join("out/metrics.json")).unwrap()).unwrap();
    assert!(m.metrics.rotation_error_rad.unwrap() < 1e-9);
    assert!(m.metrics.tag_centroid_rmse < 1e-9);
    assert!(String::from_utf8_lossy(&out.stdout).contains("tags recovered: 6/6"));
}

#[test]
fn logs_are_json_lines() {
    let root = tempfile::tempdir().unwrap();
    let dir = small_scene(root.path(), "s", 3);
    let out = std::process::Command::new(BIN)
        .args(["localize", "--config", s(&dir.join("pipeline.toml"))])
        .env("TAGALIGN_LOG", "info")
        .output()
        .unwrap();
    let err = stderr(&out);
    assert!(err.lines().count() >= 3);
    for line in err.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["level"].is_string() && v["message"].is_string());
    }
}
