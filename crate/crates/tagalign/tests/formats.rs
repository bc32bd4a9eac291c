use proptest::prelude::*;
use tagalign::ingest::{
    join_descriptors_to_points, parse_ply, parse_reconstruction, parse_tracks, write_ply, FeatureArchive, IngestError,
};
use tagalign_core::{Descriptors, FloatDescriptor, Point3, PointCloud};

fn f32_point() -> impl Strategy<Value = Point3> {
    (-1e4f32..1e4, -1e4f32..1e4, -1e4f32..1e4).prop_map(|(x, y, z)| Point3::new(x.into(), y.into(), z.into()))
}

fn cloud(max: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec((f32_point(), any::<[u8; 3]>()), 0..max).prop_flat_map(|v| {
        let (points, colors): (Vec<_>, Vec<_>) = v.into_iter().unzip();
        any::<bool>().prop_map(move |with_colors| {
            PointCloud::new(points.clone(), with_colors.then(|| colors.clone())).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ply_roundtrip_is_bit_exact(c in cloud(10_000)) {
        let back = parse_ply(&write_ply(&c)).unwrap();
        prop_assert_eq!(back.len(), c.len());
        for (a, b) in back.points().iter().zip(c.points()) {
            prop_assert_eq!(a.to_array().map(f64::to_bits), b.to_array().map(f64::to_bits));
        }
        prop_assert_eq!(back.colors(), c.colors());
    }

    #[test]
    fn ply_rounds_f64_to_nearest_f32(p in (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64)) {
        let c = PointCloud::from_points(vec![Point3::new(p.0, p.1, p.2)]);
        let q = parse_ply(&write_ply(&c)).unwrap().points()[0];
        prop_assert_eq!(q.x, f64::from(p.0 as f32));
        prop_assert_eq!(q.y, f64::from(p.1 as f32));
        prop_assert_eq!(q.z, f64::from(p.2 as f32));
    }
}

#[test]
fn ply_thousand_point_roundtrip() {
    let points: Vec<Point3> = (0..1000)
        .map(|i| {
            let t = i as f32 * 0.731;
            Point3::new(f64::from(t.sin() * 3.0), f64::from(t.cos()), f64::from(t * 1e-3))
        })
        .collect();
    let c = PointCloud::from_points(points);
    assert_eq!(parse_ply(&write_ply(&c)).unwrap(), c);
}

fn desc(v: f64) -> FloatDescriptor {
    FloatDescriptor::new(vec![v, 0.0]).unwrap()
}

fn float_values(d: &Descriptors) -> Vec<f64> {
    match d {
        Descriptors::Float(v) => v.iter().map(|d| d.values()[0]).collect(),
        Descriptors::Binary(_) => panic!("expected float descriptors"),
    }
}

#[test]
fn join_single_point() {
    let rec = parse_reconstruction(r#"[{"points": {"7": {"coordinates": [1, 2, 3], "color": [9, 8, 7]}}}]"#).unwrap();
    let tracks = parse_tracks("a.jpg\t7\t0\t0.5\t0.5\t1\t9\t8\t7\n").unwrap();
    let feats: FeatureArchive = [("a.jpg".to_string(), vec![desc(4.0)])].into();
    let j = join_descriptors_to_points(&rec, &tracks, &feats).unwrap();
    assert_eq!(j.cloud.points(), &[Point3::new(1.0, 2.0, 3.0)]);
    assert_eq!(float_values(j.cloud.descriptors()), [4.0]);
    assert_eq!(j.track_ids, ["7"]);
    assert_eq!(j.colors, Some(vec![[9, 8, 7]]));
}

#[test]
fn join_excludes_untracked_and_keeps_every_observation() {
    let rec = parse_reconstruction(
        r#"[{"points": {
            "1": {"coordinates": [0, 0, 0]},
            "2": {"coordinates": [1, 1, 1]},
            "3": {"coordinates": [2, 2, 2]}}}]"#,
    )
    .unwrap();
    let tracks = parse_tracks(
        "OPENSFM_TRACKS_VERSION_v1\n\
         a.jpg\t2\t0\n\
         b.jpg\t2\t1\n\
         c.jpg\t2\t0\n\
         a.jpg\t1\t1\n\
         a.jpg\t9\t2\n\
         z.jpg\t3\t0\n\
         b.jpg\t3\t5\n",
    )
    .unwrap();
    let feats: FeatureArchive = [
        ("a.jpg".to_string(), vec![desc(10.0), desc(11.0), desc(12.0)]),
        ("b.jpg".to_string(), vec![desc(20.0), desc(21.0)]),
        ("c.jpg".to_string(), vec![desc(30.0)]),
    ]
    .into();
    let j = join_descriptors_to_points(&rec, &tracks, &feats).unwrap();
    assert_eq!(j.track_ids, ["2", "1"]);
    assert_eq!(j.cloud.points(), &[Point3::new(1.0, 1.0, 1.0), Point3::ORIGIN]);
    assert_eq!(float_values(j.cloud.descriptors()), [10.0, 21.0, 30.0, 11.0]);
    assert_eq!(j.cloud.owners(), &[0, 0, 0, 1]);
    assert_eq!(j.cloud.descriptors_of(0).count(), 3);
    assert_eq!(j.report.unknown_tracks, 1);
    assert_eq!(j.report.missing_images, 1);
    assert_eq!(j.report.out_of_range_features, 1);
    assert_eq!(j.report.excluded_points, 1);
    assert_eq!(j.colors, None);
}

#[test]
fn join_rejects_mixed_archive_dimensions() {
    let rec = parse_reconstruction(r#"[{"points": {"1": {"coordinates": [0, 0, 0]}}}]"#).unwrap();
    let tracks = parse_tracks("a.jpg\t1\t0\n").unwrap();
    let feats: FeatureArchive = [
        ("a.jpg".to_string(), vec![desc(1.0)]),
        ("b.jpg".to_string(), vec![FloatDescriptor::new(vec![1.0]).unwrap()]),
    ]
    .into();
    assert_eq!(
        join_descriptors_to_points(&rec, &tracks, &feats).unwrap_err(),
        IngestError::MixedDimension { expected: 2, found: 1 }
    );
}

proptest! {
    #[test]
    fn join_output_is_traceable(
        n_points in 0usize..12,
        rows in prop::collection::vec((0usize..4, 0usize..15, 0usize..6), 0..40),
        image_sizes in prop::collection::vec(0usize..6, 3),
    ) {
        let json = format!(
            "[{{\"points\": {{{}}}}}]",
            (0..n_points).map(|i| format!("\"{i}\": {{\"coordinates\": [{i}, 0, 0]}}")).collect::<Vec<_>>().join(",")
        );
        let rec = parse_reconstruction(&json).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        let mut text = String::new();
        for (img, track, feat) in rows {
            if seen.insert((img, feat)) {
                text.push_str(&format!("img{img}\t{track}\t{feat}\n"));
            }
        }
        let tracks = parse_tracks(&text).unwrap();
        let feats: FeatureArchive = image_sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| (format!("img{i}"), (0..n).map(|f| desc((100 * i + f) as f64)).collect()))
            .collect();
        let j = join_descriptors_to_points(&rec, &tracks, &feats).unwrap();
        prop_assert!(j.cloud.points().len() <= rec.points.len());
        // every descriptor value encodes its (image, feature) pair; each pair appears at most once
        let values = float_values(j.cloud.descriptors());
        let unique: std::collections::BTreeSet<u64> = values.iter().map(|v| *v as u64).collect();
        prop_assert_eq!(unique.len(), values.len());
        for (v, &owner) in values.iter().zip(j.cloud.owners()) {
            let (img, feat) = (*v as usize / 100, *v as usize % 100);
            let row = tracks.rows.iter().find(|r| r.image_name == format!("img{img}") && r.feature_id == feat);
            prop_assert_eq!(&row.unwrap().track_id, &j.track_ids[owner]);
        }
        let used = tracks.rows.len() - j.report.unknown_tracks - j.report.missing_images - j.report.out_of_range_features;
        prop_assert_eq!(used, values.len());
        prop_assert_eq!(j.report.excluded_points + j.cloud.points().len(), rec.points.len());
    }
}
