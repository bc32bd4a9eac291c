//! Registration of two point clouds through fiducial tags.
//!
//! Tags are localized in each cloud by matching their feature descriptors
//! against descriptors attached to the cloud's points ([`matching`]), grouping
//! the matched points spatially and taking the centroid of the consensus
//! ([`localize`]). The tag positions in both clouds then determine the
//! cloud-to-cloud transform ([`alignment`]). [`synth`] builds scenes with a
//! known answer for end-to-end checks.
//!
//! The crate is `no_std` and needs only `alloc`; file formats and the
//! command-line tool live in the `tagalign` crate.

#![no_std]
#![deny(rust_2018_idioms, unsafe_code)]

extern crate alloc;

pub mod alignment;
pub mod cloud;
pub mod geometry;
pub mod localize;
pub mod matching;
pub mod synth;

pub use alignment::{
    align, alignment_residuals, build_dlt_system, build_dlt_system_with, estimate_dlt,
    estimate_similarity, solve_dlt, transform_cloud, AlignError, Alignment, AlignmentMethod,
    Conditioning, Correspondence, CorrespondenceSet, DltSolution, DltSystem, Residuals,
};
pub use cloud::{CloudError, CloudLabel, DescribedCloud, DescriptorKind, Descriptors, TagFeatureSet};
pub use geometry::{
    apply_transform, centroid, hamming_distance, l2_distance, normalized_hamming,
    similarity_to_homogeneous, BinaryDescriptor, FloatDescriptor, GeometryError,
    HomogeneousTransform, Point3, PointCloud, SimilarityTransform,
};
pub use localize::{
    cluster_points, localize_all_tags, localize_tag, ClusterConfig, LocalizationOutcome,
    LocalizeError, TagLocation, TagMiss,
};
pub use matching::{
    knn2, match_tag_to_cloud, ratio_test_match, MatchCandidate, MatchError, Neighbors,
    RatioTestConfig,
};
pub use synth::{evaluate, generate_scene, EvalError, EvalMetrics, MetricMode, Scene, SceneConfig, Truth};
