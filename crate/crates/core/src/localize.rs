//! Spatial consensus: potential match points of a tag are grouped by
//! fixed-radius single linkage and the largest group of at least
//! `min_support` points gives the tag coordinate (its centroid).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::cloud::{CloudLabel, DescribedCloud, TagFeatureSet};
use crate::geometry::{bounding_box_diagonal, centroid, Point3};
use crate::matching::{match_tag_to_cloud, MatchError, RatioTestConfig};

/// Smallest consensus accepted as a tag.
pub const MIN_TAG_SUPPORT: usize = 4;
/// Default linkage radius as a fraction of the cloud's bounding-box diagonal.
pub const DEFAULT_RADIUS_FRACTION: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LocalizeError {
    #[error("tag `{tag_id}`: largest consensus has {largest} points, {required} required")]
    InsufficientSupport {
        tag_id: String,
        largest: usize,
        required: usize,
    },
    #[error("invalid cluster configuration: {0}")]
    InvalidConfig(&'static str),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Resolved clustering parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    /// Linkage radius in scene units.
    pub epsilon: f64,
    pub min_support: usize,
}

impl ClusterConfig {
    pub fn new(epsilon: f64, min_support: usize) -> Result<Self, LocalizeError> {
        let cfg = Self {
            epsilon,
            min_support,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Radius `fraction` × bounding-box diagonal of `cloud_points`.
    pub fn scene_relative(
        cloud_points: &[Point3],
        fraction: f64,
        min_support: usize,
    ) -> Result<Self, LocalizeError> {
        if !(fraction > 0.0 && fraction.is_finite()) {
            return Err(LocalizeError::InvalidConfig("radius fraction must be positive"));
        }
        Self::new(fraction * bounding_box_diagonal(cloud_points), min_support)
    }

    pub fn validate(&self) -> Result<(), LocalizeError> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(LocalizeError::InvalidConfig("epsilon must be positive and finite"));
        }
        if self.min_support < MIN_TAG_SUPPORT {
            return Err(LocalizeError::InvalidConfig("min_support must be at least 4"));
        }
        Ok(())
    }
}

/// A tag's estimated position in one cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct TagLocation {
    pub tag_id: String,
    pub coordinate: Point3,
    pub support: usize,
    pub cloud_label: CloudLabel,
    /// The consensus points whose centroid is `coordinate`.
    pub members: Vec<Point3>,
}

/// Connected components of the graph linking points at distance ≤ `epsilon`.
///
/// Each cluster lists point indices in ascending order; clusters are ordered by
/// their smallest index. A non-positive or NaN `epsilon` links only coincident
/// points.
pub fn cluster_points(points: &[Point3], epsilon: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    // cells twice the radius wide: linked points always fall in adjacent cells
    let cell = 2.0 * epsilon;
    let key = |p: &Point3| -> (i64, i64, i64) {
        if cell > 0.0 {
            (
                libm::floor(p.x / cell) as i64,
                libm::floor(p.y / cell) as i64,
                libm::floor(p.z / cell) as i64,
            )
        } else {
            (0, 0, 0)
        }
    };
    let mut grid: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }

    let mut label = alloc::vec![usize::MAX; points.len()];
    let mut clusters = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..points.len() {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        label[seed] = id;
        stack.push(seed);
        let mut members = Vec::new();
        while let Some(i) = stack.pop() {
            members.push(i);
            let (cx, cy, cz) = key(&points[i]);
            for dx in -1..=1i64 {
                for dy in -1..=1i64 {
                    for dz in -1..=1i64 {
                        let k = (cx.saturating_add(dx), cy.saturating_add(dy), cz.saturating_add(dz));
                        let Some(bucket) = grid.get(&k) else { continue };
                        for &j in bucket {
                            if label[j] == usize::MAX && points[i].distance(&points[j]) <= epsilon {
                                label[j] = id;
                                stack.push(j);
                            }
                        }
                    }
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    clusters
}

fn mean_pairwise_distance(points: &[Point3], members: &[usize]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            sum += points[i].distance(&points[j]);
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Picks the consensus cluster among `potential_matches` and returns its centroid.
///
/// Selection: most members; then smallest mean pairwise distance; then the
/// cluster containing the earliest match.
pub fn localize_tag(
    tag_id: &str,
    potential_matches: &[Point3],
    cfg: &ClusterConfig,
    cloud_label: CloudLabel,
) -> Result<TagLocation, LocalizeError> {
    cfg.validate()?;
    let clusters = cluster_points(potential_matches, cfg.epsilon);
    let largest = clusters.iter().map(Vec::len).max().unwrap_or(0);

    let mut winner: Option<(&Vec<usize>, f64)> = None;
    for c in clusters.iter().filter(|c| c.len() >= cfg.min_support) {
        let spread = mean_pairwise_distance(potential_matches, c);
        let better = match winner {
            None => true,
            Some((w, w_spread)) => {
                c.len() > w.len()
                    || (c.len() == w.len()
                        && (spread < w_spread || (spread == w_spread && c[0] < w[0])))
            }
        };
        if better {
            winner = Some((c, spread));
        }
    }

    let Some((members, _)) = winner else {
        return Err(LocalizeError::InsufficientSupport {
            tag_id: tag_id.into(),
            largest,
            required: cfg.min_support,
        });
    };
    let members: Vec<Point3> = members.iter().map(|&i| potential_matches[i]).collect();
    let coordinate = centroid(&members).expect("winning cluster is nonempty");
    Ok(TagLocation {
        tag_id: tag_id.into(),
        coordinate,
        support: members.len(),
        cloud_label,
        members,
    })
}

/// A tag that could not be localized.
#[derive(Debug, Clone, PartialEq)]
pub struct TagMiss {
    pub tag_id: String,
    pub potential_matches: usize,
    pub largest_cluster: usize,
}

/// Result of localizing a batch of tags in one cloud.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalizationOutcome {
    pub locations: Vec<TagLocation>,
    pub misses: Vec<TagMiss>,
    /// Pairs of tag ids whose coordinates lie within epsilon of each other,
    /// usually because their matches merged into one cluster.
    pub coincident: Vec<(String, String)>,
}

/// Matches and localizes every tag in `cloud`. Unfound tags go to the miss list.
pub fn localize_all_tags(
    tags: &[TagFeatureSet],
    cloud: &DescribedCloud,
    match_cfg: &RatioTestConfig,
    cluster_cfg: &ClusterConfig,
) -> Result<LocalizationOutcome, LocalizeError> {
    cluster_cfg.validate()?;
    let mut out = LocalizationOutcome::default();
    for tag in tags {
        let matches = match_tag_to_cloud(tag, cloud, match_cfg)?;
        match localize_tag(tag.tag_id(), &matches, cluster_cfg, cloud.label()) {
            Ok(loc) => out.locations.push(loc),
            Err(LocalizeError::InsufficientSupport { largest, .. }) => out.misses.push(TagMiss {
                tag_id: tag.tag_id().into(),
                potential_matches: matches.len(),
                largest_cluster: largest,
            }),
            Err(e) => return Err(e),
        }
    }
    for (i, a) in out.locations.iter().enumerate() {
        for b in &out.locations[i + 1..] {
            if a.coordinate.distance(&b.coordinate) <= cluster_cfg.epsilon {
                out.coincident.push((a.tag_id.clone(), b.tag_id.clone()));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn p(x: f64, y: f64, z: f64) -> Point3 {
        Point3::new(x, y, z)
    }

    #[test]
    fn separated_groups() {
        let eps = 0.1;
        let mut pts = vec![p(0.0, 0.0, 0.0), p(0.05, 0.0, 0.0), p(0.0, 0.05, 0.0)];
        pts.extend([p(1.0, 0.0, 0.0), p(1.05, 0.0, 0.0)]);
        let c = cluster_points(&pts, eps);
        assert_eq!(c, vec![vec![0, 1, 2], vec![3, 4]]);
    }

    #[test]
    fn single_linkage_chains() {
        let eps = 0.5;
        let pts: Vec<_> = (0..6).map(|i| p(i as f64 * 0.9 * eps, 0.0, 0.0)).collect();
        assert_eq!(cluster_points(&pts, eps).len(), 1);
    }

    #[test]
    fn boundary_distance_links() {
        let pts = [p(0.0, 0.0, 0.0), p(0.25, 0.0, 0.0)];
        assert_eq!(cluster_points(&pts, 0.25).len(), 1);
        assert_eq!(cluster_points(&pts, 0.2499).len(), 2);
        assert!(cluster_points(&[], 1.0).is_empty());
    }

    #[test]
    fn negative_coordinates_across_cell_edges() {
        let pts = [p(-0.01, -0.01, -0.01), p(0.01, 0.01, 0.01), p(-0.2, 0.0, 0.0)];
        assert_eq!(cluster_points(&pts, 0.05), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn six_grouped_two_outliers() {
        let group = [
            p(1.0, 1.0, 1.0),
            p(1.01, 1.0, 1.0),
            p(1.0, 1.01, 1.0),
            p(1.0, 1.0, 1.01),
            p(1.01, 1.01, 1.0),
            p(0.99, 1.0, 0.99),
        ];
        let mut pts = vec![p(5.0, 5.0, 5.0)];
        pts.extend_from_slice(&group);
        pts.push(p(-3.0, 0.0, 2.0));
        let cfg = ClusterConfig::new(0.05, 4).unwrap();
        let loc = localize_tag("t", &pts, &cfg, CloudLabel::Slam).unwrap();
        assert_eq!(loc.support, 6);
        let expected = centroid(&group).unwrap();
        assert!(loc.coordinate.distance(&expected) < 1e-15);
    }

    #[test]
    fn three_points_are_not_enough() {
        let pts = [p(0.0, 0.0, 0.0), p(0.01, 0.0, 0.0), p(0.0, 0.01, 0.0)];
        let cfg = ClusterConfig::new(0.1, 4).unwrap();
        assert_eq!(
            localize_tag("t", &pts, &cfg, CloudLabel::Sfm),
            Err(LocalizeError::InsufficientSupport {
                tag_id: "t".into(),
                largest: 3,
                required: 4
            })
        );
    }

    #[test]
    fn coincident_points() {
        let q = p(0.3, -2.0, 7.5);
        let cfg = ClusterConfig::new(0.1, 4).unwrap();
        let loc = localize_tag("t", &[q; 4], &cfg, CloudLabel::Sfm).unwrap();
        assert_eq!((loc.coordinate, loc.support), (q, 4));
    }

    #[test]
    fn equal_size_tie_prefers_tighter_cluster() {
        let loose = [p(0.0, 0.0, 0.0), p(0.09, 0.0, 0.0), p(0.0, 0.09, 0.0), p(0.0, 0.0, 0.09)];
        let tight = [p(5.0, 0.0, 0.0), p(5.01, 0.0, 0.0), p(5.0, 0.01, 0.0), p(5.0, 0.0, 0.01)];
        let mut pts = loose.to_vec();
        pts.extend_from_slice(&tight);
        let cfg = ClusterConfig::new(0.1, 4).unwrap();
        let loc = localize_tag("t", &pts, &cfg, CloudLabel::Sfm).unwrap();
        assert!(loc.coordinate.distance(&centroid(&tight).unwrap()) < 1e-15);
    }

    #[test]
    fn config_rules() {
        assert!(ClusterConfig::new(0.1, 3).is_err());
        assert!(ClusterConfig::new(0.0, 4).is_err());
        let cfg = ClusterConfig::scene_relative(&[p(0.0, 0.0, 0.0), p(3.0, 4.0, 0.0)], 0.02, 4).unwrap();
        assert!((cfg.epsilon - 0.1).abs() < 1e-15);
        assert!(ClusterConfig::scene_relative(&[p(1.0, 1.0, 1.0)], 0.02, 4).is_err());
    }
}
