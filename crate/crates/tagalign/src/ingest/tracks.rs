//! SfM tracks table: an optional `OPENSFM_TRACKS_VERSION...` first line, then
//! tab-separated rows `image track_id feature_id [x y scale r g b ...]`.
//! Columns past the third are ignored.

use std::collections::BTreeSet;

use super::IngestError;

const VERSION_PREFIX: &str = "OPENSFM_TRACKS_VERSION";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrackRow {
    pub image_name: String,
    pub track_id: String,
    pub feature_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrackTable {
    pub rows: Vec<TrackRow>,
}

pub fn parse_tracks(text: &str) -> Result<TrackTable, IngestError> {
    let mut rows = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.trim_end_matches('\r');
        if content.trim().is_empty() || (i == 0 && content.starts_with(VERSION_PREFIX)) {
            continue;
        }
        let fields: Vec<&str> = content.split('\t').collect();
        if fields.len() < 3 {
            return Err(IngestError::Parse {
                line,
                message: format!("expected at least 3 tab-separated columns, found {}", fields.len()),
            });
        }
        let (image_name, track_id) = (fields[0].trim(), fields[1].trim());
        if image_name.is_empty() || track_id.is_empty() {
            return Err(IngestError::Parse {
                line,
                message: "empty image name or track id".into(),
            });
        }
        let value: i64 = fields[2].trim().parse().map_err(|_| IngestError::Parse {
            line,
            message: format!("feature id `{}` is not an integer", fields[2]),
        })?;
        if value < 0 {
            return Err(IngestError::NegativeFeatureId { line, value });
        }
        let feature_id = value as usize;
        if !seen.insert((image_name.to_string(), feature_id)) {
            return Err(IngestError::Parse {
                line,
                message: format!("feature {feature_id} of `{image_name}` listed twice"),
            });
        }
        rows.push(TrackRow {
            image_name: image_name.into(),
            track_id: track_id.into(),
            feature_id,
        });
    }
    Ok(TrackTable { rows })
}

/// Writes the table with a version header. Keypoint position and scale are
/// not tracked here and are written as `0 0 1`, color as `0 0 0`.
pub fn write_tracks(table: &TrackTable) -> String {
    let mut out = String::from("OPENSFM_TRACKS_VERSION_v1\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t0\t0\t1\t0\t0\t0\n",
            r.image_name, r.track_id, r.feature_id
        ));
    }
    out
}
