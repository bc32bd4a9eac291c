//! Attaches per-image float descriptors to SfM points through the tracks table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tagalign_core::{CloudLabel, DescribedCloud, Descriptors, Point3};

use super::feat1::check_archive_dimension;
use super::{FeatureArchive, IngestError, SfmReconstruction, TrackTable};

/// Color given to SfM points that lack one when others have it.
pub const MISSING_COLOR: [u8; 3] = [200, 200, 200];

/// Non-fatal problems found while joining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct JoinReport {
    /// Rows whose track id is not in the reconstruction.
    pub unknown_tracks: usize,
    /// Rows naming an image with no archive.
    pub missing_images: usize,
    /// Rows whose feature id is past the end of the image's archive.
    pub out_of_range_features: usize,
    /// Reconstruction points never referenced by a usable row.
    pub excluded_points: usize,
    /// Track ids dropped from later reconstructions.
    pub duplicate_tracks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JoinedCloud {
    pub cloud: DescribedCloud,
    /// Track id of each point of `cloud`.
    pub track_ids: Vec<String>,
    /// Point colors, present when the reconstruction carries any.
    pub colors: Option<Vec<[u8; 3]>>,
    pub report: JoinReport,
}

/// Builds the SfM described cloud. Points appear in order of their first
/// usable track row; a point seen in k images carries k descriptors.
pub fn join_descriptors_to_points(
    rec: &SfmReconstruction,
    tracks: &TrackTable,
    feats: &FeatureArchive,
) -> Result<JoinedCloud, IngestError> {
    check_archive_dimension(feats)?;
    let mut report = JoinReport {
        duplicate_tracks: rec.duplicates,
        ..JoinReport::default()
    };
    let mut index_of: BTreeMap<&str, usize> = BTreeMap::new();
    let mut track_ids = Vec::new();
    let mut points: Vec<Point3> = Vec::new();
    let mut colors = Vec::new();
    let mut descriptors = Vec::new();
    let mut owners = Vec::new();
    for row in &tracks.rows {
        let Some(point) = rec.points.get(&row.track_id) else {
            report.unknown_tracks += 1;
            continue;
        };
        let Some(image) = feats.get(&row.image_name) else {
            report.missing_images += 1;
            continue;
        };
        let Some(desc) = image.get(row.feature_id) else {
            report.out_of_range_features += 1;
            continue;
        };
        let owner = *index_of.entry(row.track_id.as_str()).or_insert_with(|| {
            track_ids.push(row.track_id.clone());
            points.push(point.coord);
            colors.push(point.color);
            points.len() - 1
        });
        descriptors.push(desc.clone());
        owners.push(owner);
    }
    report.excluded_points = rec.points.len() - points.len();
    let colors = colors
        .iter()
        .any(Option::is_some)
        .then(|| colors.iter().map(|c| c.unwrap_or(MISSING_COLOR)).collect());
    let cloud = DescribedCloud::new(CloudLabel::Sfm, points, Descriptors::Float(descriptors), owners)
        .expect("every joined point owns a descriptor of the archive dimension");
    Ok(JoinedCloud {
        cloud,
        track_ids,
        colors,
        report,
    })
}
