//! Brute-force two-nearest-neighbor descriptor matching with a ratio test and
//! an absolute distance gate.
//!
//! Binary descriptors are compared by Hamming distance normalized to `[0, 1]`
//! by the bit count; real-valued descriptors by Euclidean distance. The second
//! neighbor is searched over every descriptor in the cloud, so a point carrying
//! several descriptors can be both the nearest and the second nearest.

use alloc::vec::Vec;

#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::cloud::{DescribedCloud, DescriptorKind, Descriptors, TagFeatureSet};
use crate::geometry::{
    l2_distance, normalized_hamming, BinaryDescriptor, FloatDescriptor, GeometryError, Point3,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("no target descriptors to match against")]
    EmptyTargets,
    #[error("descriptor kind mismatch: queries are {query}, targets are {target}")]
    KindMismatch {
        query: DescriptorKind,
        target: DescriptorKind,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("invalid ratio-test configuration: {0}")]
    InvalidConfig(&'static str),
}

/// Thresholds of the ratio test.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RatioTestConfig {
    /// Upper bound (exclusive) on best / second-best distance.
    pub ratio_max: f64,
    /// Upper bound (exclusive) on the normalized Hamming distance of the best match.
    pub abs_max_binary: f64,
    /// Upper bound (exclusive) on the L2 distance of the best match.
    pub abs_max_float: f64,
}

impl Default for RatioTestConfig {
    fn default() -> Self {
        Self {
            ratio_max: 0.7,
            abs_max_binary: 0.35,
            abs_max_float: 1.0,
        }
    }
}

impl RatioTestConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.ratio_max > 0.0 && self.ratio_max < 1.0) {
            return Err(MatchError::InvalidConfig("ratio_max must lie in (0, 1)"));
        }
        if !(self.abs_max_binary > 0.0 && self.abs_max_binary <= 1.0) {
            return Err(MatchError::InvalidConfig("abs_max_binary must lie in (0, 1]"));
        }
        if !(self.abs_max_float > 0.0 && self.abs_max_float.is_finite()) {
            return Err(MatchError::InvalidConfig("abs_max_float must be positive"));
        }
        Ok(())
    }

    pub fn abs_max(&self, kind: DescriptorKind) -> f64 {
        match kind {
            DescriptorKind::Binary => self.abs_max_binary,
            DescriptorKind::Float => self.abs_max_float,
        }
    }
}

/// A descriptor type with a distance used for matching.
pub trait MatchDescriptor {
    const KIND: DescriptorKind;

    fn match_distance(&self, other: &Self) -> Result<f64, GeometryError>;
}

impl MatchDescriptor for BinaryDescriptor {
    const KIND: DescriptorKind = DescriptorKind::Binary;

    fn match_distance(&self, other: &Self) -> Result<f64, GeometryError> {
        Ok(normalized_hamming(self, other))
    }
}

impl MatchDescriptor for FloatDescriptor {
    const KIND: DescriptorKind = DescriptorKind::Float;

    fn match_distance(&self, other: &Self) -> Result<f64, GeometryError> {
        l2_distance(self, other)
    }
}

/// Nearest and second-nearest neighbor of one query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbors {
    pub best_index: usize,
    pub best_dist: f64,
    /// `f64::INFINITY` when there is a single target.
    pub second_dist: f64,
}

/// Two nearest targets of `query`; ties go to the lowest index.
pub fn knn2<D: MatchDescriptor>(query: &D, targets: &[D]) -> Result<Neighbors, MatchError> {
    if targets.is_empty() {
        return Err(MatchError::EmptyTargets);
    }
    let mut best = Neighbors {
        best_index: 0,
        best_dist: f64::INFINITY,
        second_dist: f64::INFINITY,
    };
    for (i, t) in targets.iter().enumerate() {
        let d = query.match_distance(t)?;
        if d < best.best_dist {
            best.second_dist = best.best_dist;
            best.best_dist = d;
            best.best_index = i;
        } else if d < best.second_dist {
            best.second_dist = d;
        }
    }
    // first target may be infinitely far only for non-finite input, which the
    // descriptor types exclude
    Ok(best)
}

/// A query descriptor that passed the ratio test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchCandidate {
    pub query_index: usize,
    /// Index into the cloud's flattened descriptor list.
    pub target_index: usize,
    /// Index of the cloud point owning `target_index`.
    pub point_index: usize,
    pub best_dist: f64,
    pub second_dist: f64,
    pub matched_point: Point3,
}

/// Acceptance rule applied to one query's neighbors.
///
/// An infinite second distance counts as ratio 0; a zero second distance
/// (best also zero) is ambiguous and rejected.
pub fn passes_ratio_test(n: &Neighbors, ratio_max: f64, abs_max: f64) -> bool {
    if n.second_dist == 0.0 {
        return false;
    }
    let ratio = if n.second_dist.is_infinite() {
        0.0
    } else {
        n.best_dist / n.second_dist
    };
    ratio < ratio_max && n.best_dist < abs_max
}

/// Ratio-test every query against the cloud. Candidates hitting the same point
/// are collapsed onto the one with the smallest `best_dist` (earliest query on
/// ties); the output is ordered by query index.
pub fn ratio_test_match(
    queries: &Descriptors,
    cloud: &DescribedCloud,
    cfg: &RatioTestConfig,
) -> Result<Vec<MatchCandidate>, MatchError> {
    cfg.validate()?;
    let abs_max = cfg.abs_max(cloud.kind());
    let neighbors = match (queries, cloud.descriptors()) {
        (Descriptors::Binary(q), Descriptors::Binary(t)) => all_neighbors(q, t)?,
        (Descriptors::Float(q), Descriptors::Float(t)) => all_neighbors(q, t)?,
        (q, t) => {
            return Err(MatchError::KindMismatch {
                query: q.kind(),
                target: t.kind(),
            })
        }
    };

    let mut accepted: Vec<MatchCandidate> = Vec::new();
    // position in `accepted` of the candidate currently holding each point
    let mut holder: alloc::collections::BTreeMap<usize, usize> = Default::default();
    for (query_index, n) in neighbors.into_iter().enumerate() {
        if !passes_ratio_test(&n, cfg.ratio_max, abs_max) {
            continue;
        }
        let point_index = cloud.owners()[n.best_index];
        let candidate = MatchCandidate {
            query_index,
            target_index: n.best_index,
            point_index,
            best_dist: n.best_dist,
            second_dist: n.second_dist,
            matched_point: cloud.points()[point_index],
        };
        match holder.get(&point_index) {
            Some(&slot) => {
                if candidate.best_dist < accepted[slot].best_dist {
                    accepted[slot] = candidate;
                }
            }
            None => {
                holder.insert(point_index, accepted.len());
                accepted.push(candidate);
            }
        }
    }
    accepted.sort_by_key(|c| c.query_index);
    Ok(accepted)
}

fn all_neighbors<D: MatchDescriptor>(queries: &[D], targets: &[D]) -> Result<Vec<Neighbors>, MatchError> {
    if queries.is_empty() {
        return Ok(Vec::new());
    }
    queries.iter().map(|q| knn2(q, targets)).collect()
}

/// Potential match points of one tag in `cloud`, ordered by query index.
pub fn match_tag_to_cloud(
    tag: &TagFeatureSet,
    cloud: &DescribedCloud,
    cfg: &RatioTestConfig,
) -> Result<Vec<Point3>, MatchError> {
    Ok(ratio_test_match(tag.descriptors(), cloud, cfg)?
        .into_iter()
        .map(|c| c.matched_point)
        .collect())
}
