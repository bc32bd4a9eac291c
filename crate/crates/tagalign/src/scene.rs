//! Writes a synthetic scene as the files the pipeline reads.
//!
//! ```text
//! <dir>/slam/map.txt               source cloud, point id = point index
//! <dir>/sfm/reconstruction.json    target cloud, track id = point index
//! <dir>/sfm/tracks.csv             point i seen as feature i % 1000 of image i / 1000
//! <dir>/sfm/features/<image>.feat1
//! <dir>/sfm/merge.ply              target cloud with colors
//! <dir>/tags/<id>.maptxt           binary tag descriptors (coordinates zero)
//! <dir>/tags/<id>.feat1            float tag descriptors
//! <dir>/truth.json                 ground truth manifest
//! <dir>/pipeline.toml              config for localize / align
//! <dir>/eval.toml                  config for eval
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use tagalign_core::{BinaryDescriptor, Descriptors, FloatDescriptor, Point3, PointCloud, Scene};

use crate::ingest::{
    write_feature_archive, write_ply, write_reconstruction, write_slam_export, write_tracks, SfmPoint,
    SfmReconstruction, SlamPoint, TrackRow, TrackTable, FEAT1_EXTENSION,
};
use crate::report::{to_json, ManifestTag, SimilarityEntry, TruthManifest};

pub const FEATURES_PER_IMAGE: usize = 1000;

pub fn image_name(index: usize) -> String {
    format!("img_{index:04}.jpg")
}

fn binary(d: &Descriptors) -> &[BinaryDescriptor] {
    match d {
        Descriptors::Binary(v) => v,
        Descriptors::Float(_) => panic!("scene source descriptors are binary"),
    }
}

fn float(d: &Descriptors) -> &[FloatDescriptor] {
    match d {
        Descriptors::Float(v) => v,
        Descriptors::Binary(_) => panic!("scene target descriptors are float"),
    }
}

pub fn truth_manifest(scene: &Scene) -> TruthManifest {
    TruthManifest {
        scene: scene.config.clone(),
        transform: scene.truth.transform.to_row_major().to_vec(),
        similarity: scene.truth.similarity.as_ref().map(|s| SimilarityEntry {
            scale: s.scale(),
            rotation: s.rotation().transpose().iter().copied().collect(),
            translation: [s.translation().x, s.translation().y, s.translation().z],
        }),
        tags: scene
            .planted
            .iter()
            .map(|t| ManifestTag {
                tag_id: t.tag_id.clone(),
                slam_centroid: t.source_centroid.to_array(),
                sfm_centroid: t.target_centroid.to_array(),
                point_ids: t.point_indices.clone(),
            })
            .collect(),
    }
}

fn pipeline_toml(scene: &Scene) -> String {
    let mut s = String::from(
        "[inputs]\n\
         slam_map = \"slam/map.txt\"\n\
         sfm_reconstruction = \"sfm/reconstruction.json\"\n\
         sfm_tracks = \"sfm/tracks.csv\"\n\
         sfm_features = \"sfm/features\"\n\
         sfm_dense = \"sfm/merge.ply\"\n\
         output_dir = \"out\"\n\n\
         [alignment]\n\
         method = \"dlt\"\n\
         direction = \"slam-to-sfm\"\n",
    );
    for t in &scene.planted {
        s.push_str(&format!(
            "\n[[tags]]\nid = \"{0}\"\nslam = \"tags/{0}.maptxt\"\nsfm = \"tags/{0}.feat1\"\n",
            t.tag_id
        ));
    }
    s
}

const EVAL_TOML: &str = "manifest = \"truth.json\"\n\
report = \"out/alignment.json\"\n\
output_dir = \"out\"\n\n\
[gates]\n\
# max_rotation_error_rad = 1e-6\n\
# max_scale_error_rel = 1e-6\n\
# max_translation_error = 1e-6\n\
# max_tag_centroid_rmse = 0.05\n\
# min_tags_recovered = 4\n";

/// All files of the exported scene, keyed by path relative to the scene
/// directory.
pub fn export_scene(scene: &Scene) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let source = &scene.source;
    let target = &scene.target;

    let slam_points: Vec<SlamPoint> = source
        .points()
        .iter()
        .zip(binary(source.descriptors()))
        .enumerate()
        .map(|(i, (&coord, &descriptor))| SlamPoint {
            point_id: i as i64,
            coord,
            descriptor,
        })
        .collect();
    files.insert("slam/map.txt".into(), write_slam_export(&slam_points).into_bytes());

    let mut rec = SfmReconstruction::default();
    for (i, p) in target.points().iter().enumerate() {
        rec.points.insert(
            i.to_string(),
            SfmPoint {
                coord: *p,
                color: Some(scene.target_colors[i]),
            },
        );
    }
    files.insert("sfm/reconstruction.json".into(), write_reconstruction(&rec).into_bytes());

    let descs = float(target.descriptors());
    let mut images: BTreeMap<usize, Vec<FloatDescriptor>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(descs.len());
    for (d, &owner) in descs.iter().zip(target.owners()) {
        let image = images.entry(owner / FEATURES_PER_IMAGE).or_default();
        rows.push(TrackRow {
            image_name: image_name(owner / FEATURES_PER_IMAGE),
            track_id: owner.to_string(),
            feature_id: image.len(),
        });
        image.push(d.clone());
    }
    files.insert("sfm/tracks.csv".into(), write_tracks(&TrackTable { rows }).into_bytes());
    for (index, d) in &images {
        let bytes = write_feature_archive(d, scene.config.float_dimension).expect("uniform dimension");
        files.insert(
            format!("sfm/features/{}.{FEAT1_EXTENSION}", image_name(*index)).into(),
            bytes,
        );
    }
    let dense = PointCloud::new(target.points().to_vec(), Some(scene.target_colors.clone()))
        .expect("one color per point");
    files.insert("sfm/merge.ply".into(), write_ply(&dense));

    for (st, tt) in scene.source_tags.iter().zip(&scene.target_tags) {
        let queries: Vec<SlamPoint> = binary(st.descriptors())
            .iter()
            .enumerate()
            .map(|(i, &descriptor)| SlamPoint {
                point_id: i as i64,
                coord: Point3::ORIGIN,
                descriptor,
            })
            .collect();
        files.insert(
            format!("tags/{}.maptxt", st.tag_id()).into(),
            write_slam_export(&queries).into_bytes(),
        );
        let bytes =
            write_feature_archive(float(tt.descriptors()), scene.config.float_dimension).expect("uniform dimension");
        files.insert(format!("tags/{}.feat1", tt.tag_id()).into(), bytes);
    }

    files.insert("truth.json".into(), to_json(&truth_manifest(scene)).into_bytes());
    files.insert("pipeline.toml".into(), pipeline_toml(scene).into_bytes());
    files.insert("eval.toml".into(), EVAL_TOML.as_bytes().to_vec());
    files
}
