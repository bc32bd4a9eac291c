//! JSON documents written and read by the commands.
//!
//! Matrices are 16 numbers in row-major order. Coordinates are `[x, y, z]`.
//! Floats are written with round-trip precision, so reading a report back
//! gives the exact values that were computed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tagalign_core::{CloudLabel, EvalMetrics, HomogeneousTransform, LocalizationOutcome, Point3, SceneConfig};

use crate::config::Direction;
use crate::ingest::JoinReport;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagEntry {
    pub tag_id: String,
    pub cloud: CloudLabel,
    pub coordinate: [f64; 3],
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissEntry {
    pub tag_id: String,
    pub potential_matches: usize,
    pub largest_cluster: usize,
}

/// `tags_slam.json` / `tags_sfm.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagReport {
    pub cloud: CloudLabel,
    pub epsilon: f64,
    pub min_support: usize,
    pub tags: Vec<TagEntry>,
    pub misses: Vec<MissEntry>,
    /// Pairs of tags localized within `epsilon` of each other.
    pub coincident: Vec<[String; 2]>,
    /// Descriptor join statistics (SfM cloud only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join: Option<JoinReport>,
}

impl TagReport {
    pub fn from_outcome(cloud: CloudLabel, epsilon: f64, min_support: usize, outcome: &LocalizationOutcome) -> Self {
        Self {
            cloud,
            epsilon,
            min_support,
            tags: outcome
                .locations
                .iter()
                .map(|l| TagEntry {
                    tag_id: l.tag_id.clone(),
                    cloud: l.cloud_label,
                    coordinate: l.coordinate.to_array(),
                    support: l.support,
                })
                .collect(),
            misses: outcome
                .misses
                .iter()
                .map(|m| MissEntry {
                    tag_id: m.tag_id.clone(),
                    potential_matches: m.potential_matches,
                    largest_cluster: m.largest_cluster,
                })
                .collect(),
            coincident: outcome.coincident.iter().map(|(a, b)| [a.clone(), b.clone()]).collect(),
            join: None,
        }
    }

    pub fn coordinate(&self, tag_id: &str) -> Option<Point3> {
        self.tags.iter().find(|t| t.tag_id == tag_id).map(|t| t.coordinate.into())
    }
}

/// `alignment.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub method: String,
    pub direction: Direction,
    /// Source-to-target transform.
    pub matrix: Vec<f64>,
    pub per_tag_residuals: BTreeMap<String, f64>,
    pub rmse: f64,
    /// Singular values of the DLT system, largest first; null for the
    /// similarity estimator.
    pub singular_values: Option<Vec<f64>>,
    pub tags_used: Vec<String>,
}

impl AlignmentReport {
    pub fn transform(&self) -> Result<HomogeneousTransform, String> {
        let values: [f64; 16] = self
            .matrix
            .as_slice()
            .try_into()
            .map_err(|_| format!("matrix has {} entries, expected 16", self.matrix.len()))?;
        HomogeneousTransform::from_row_major(&values).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityEntry {
    pub scale: f64,
    /// Row-major 3×3.
    pub rotation: Vec<f64>,
    pub translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestTag {
    pub tag_id: String,
    /// True tag centroid in the SLAM cloud.
    pub slam_centroid: [f64; 3],
    /// The same centroid in the SfM cloud, before coordinate noise.
    pub sfm_centroid: [f64; 3],
    /// SLAM point ids (equal to SfM track ids) of the tag's points.
    pub point_ids: Vec<usize>,
}

/// `truth.json` written by `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthManifest {
    pub scene: SceneConfig,
    /// SLAM-to-SfM transform.
    pub transform: Vec<f64>,
    pub similarity: Option<SimilarityEntry>,
    pub tags: Vec<ManifestTag>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    pub gate: String,
    pub limit: f64,
    /// Null when the metric is undefined (for example rotation error of a
    /// non-similarity result); such gates are skipped.
    pub value: Option<f64>,
    pub passed: bool,
}

/// `metrics.json` written by `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metrics: EvalMetrics,
    pub gates: Vec<GateResult>,
    pub passed: bool,
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::parse(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_report_roundtrip_is_exact() {
        let h = HomogeneousTransform::from_affine_rows([
            [0.1 + 0.2, -1.0 / 3.0, 0.0, 1e-17],
            [0.0, 1.0, 2.0 / 7.0, 5.0],
            [0.0, 0.0, 1.0, -0.0],
        ])
        .unwrap();
        let r = AlignmentReport {
            method: "dlt".into(),
            direction: Direction::SlamToSfm,
            matrix: h.to_row_major().to_vec(),
            per_tag_residuals: [("tag0".to_string(), 1e-12)].into(),
            rmse: 1e-12,
            singular_values: None,
            tags_used: vec!["tag0".into()],
        };
        let text = to_json(&r);
        assert!(text.contains("\"singular_values\": null"));
        assert!(text.contains("\"direction\": \"slam-to-sfm\""));
        let back: AlignmentReport = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.transform().unwrap(), h);
    }

    #[test]
    fn tag_report_field_names() {
        let r = TagReport {
            cloud: CloudLabel::Sfm,
            epsilon: 0.5,
            min_support: 4,
            tags: vec![TagEntry {
                tag_id: "t".into(),
                cloud: CloudLabel::Sfm,
                coordinate: [1.0, 2.0, 3.0],
                support: 5,
            }],
            misses: vec![],
            coincident: vec![],
            join: None,
        };
        let v: serde_json::Value = serde_json::from_str(&to_json(&r)).unwrap();
        assert_eq!(v["cloud"], "sfm");
        assert_eq!(v["tags"][0]["coordinate"][2], 3.0);
        assert_eq!(v["tags"][0]["support"], 5);
        assert!(v.get("join").is_none());
        assert_eq!(r.coordinate("t"), Some(Point3::new(1.0, 2.0, 3.0)));
    }
}
