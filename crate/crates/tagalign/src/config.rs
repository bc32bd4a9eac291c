//! TOML configuration for the pipeline and evaluation commands.
//!
//! Relative paths are resolved against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tagalign_core::localize::{DEFAULT_RADIUS_FRACTION, MIN_TAG_SUPPORT};
use tagalign_core::{AlignmentMethod, Point3, RatioTestConfig};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Map the SLAM cloud onto the SfM cloud.
    #[default]
    SlamToSfm,
    SfmToSlam,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::SlamToSfm => "slam-to-sfm",
            Direction::SfmToSlam => "sfm-to-slam",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Dlt,
    Similarity,
}

impl From<Method> for AlignmentMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Dlt => AlignmentMethod::Dlt,
            Method::Similarity => AlignmentMethod::Similarity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// MAPTXT export of the SLAM map.
    pub slam_map: PathBuf,
    /// Optional keyframe trajectory (`frame tx ty tz qx qy qz qw`).
    pub slam_trajectory: Option<PathBuf>,
    pub sfm_reconstruction: PathBuf,
    pub sfm_tracks: PathBuf,
    /// Directory of `<image>.feat1` archives.
    pub sfm_features: PathBuf,
    /// Dense SfM cloud used in the merged output instead of the sparse points.
    pub sfm_dense: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// One tag: its binary (SLAM) and float (SfM) descriptor archives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagPaths {
    pub id: String,
    pub slam: PathBuf,
    pub sfm: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchingSection {
    pub slam: RatioTestConfig,
    pub sfm: RatioTestConfig,
}

/// Clustering radius: `epsilon` when set, else `epsilon_fraction` times the
/// bounding-box diagonal of the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterSettings {
    pub epsilon: Option<f64>,
    pub epsilon_fraction: f64,
    pub min_support: usize,
}

impl Default for ClusterSettings {
    fn default() -> Self {
        Self {
            epsilon: None,
            epsilon_fraction: DEFAULT_RADIUS_FRACTION,
            min_support: MIN_TAG_SUPPORT,
        }
    }
}

impl ClusterSettings {
    pub fn epsilon_for(&self, points: &[Point3]) -> f64 {
        self.epsilon
            .unwrap_or_else(|| self.epsilon_fraction * tagalign_core::geometry::bounding_box_diagonal(points))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusteringSection {
    pub slam: ClusterSettings,
    pub sfm: ClusterSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlignmentSection {
    pub method: Method,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub inputs: Inputs,
    pub tags: Vec<TagPaths>,
    #[serde(default)]
    pub matching: MatchingSection,
    #[serde(default)]
    pub clustering: ClusteringSection,
    #[serde(default)]
    pub alignment: AlignmentSection,
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Reads the config and makes its paths absolute (relative to the file).
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut cfg: PipelineConfig =
            toml::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let i = &mut cfg.inputs;
        for p in [&mut i.slam_map, &mut i.sfm_reconstruction, &mut i.sfm_tracks, &mut i.sfm_features, &mut i.output_dir] {
            resolve(base, p);
        }
        for p in [&mut i.slam_trajectory, &mut i.sfm_dense].into_iter().flatten() {
            resolve(base, p);
        }
        for t in &mut cfg.tags {
            resolve(base, &mut t.slam);
            resolve(base, &mut t.sfm);
        }
        for m in [&cfg.matching.slam, &cfg.matching.sfm] {
            m.validate().map_err(|e| CliError::parse(path, e.to_string()))?;
        }
        Ok(cfg)
    }

    /// Checks that every input exists.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let i = &self.inputs;
        let mut paths = vec![&i.slam_map, &i.sfm_reconstruction, &i.sfm_tracks, &i.sfm_features];
        paths.extend(i.slam_trajectory.iter().chain(i.sfm_dense.iter()));
        paths.extend(self.tags.iter().flat_map(|t| [&t.slam, &t.sfm]));
        for p in paths {
            if !p.exists() {
                return Err(CliError::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
            }
        }
        Ok(())
    }
}

/// Limits checked by `eval`; unset gates are not checked.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Gates {
    pub max_rotation_error_rad: Option<f64>,
    pub max_scale_error_rel: Option<f64>,
    pub max_translation_error: Option<f64>,
    pub max_tag_centroid_rmse: Option<f64>,
    pub min_tags_recovered: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    pub manifest: PathBuf,
    pub report: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub gates: Gates,
}

impl EvalConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = read_text(path)?;
        let mut cfg: EvalConfig = toml::from_str(&text).map_err(|e| CliError::parse(path, e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.manifest, &mut cfg.report, &mut cfg.output_dir] {
            resolve(base, p);
        }
        Ok(cfg)
    }
}
