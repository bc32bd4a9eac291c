//! Synthetic two-cloud scenes with planted tags and a known transform, and the
//! metrics used to score a recovered transform against the truth.
//!
//! # Randomness
//!
//! Every scene is a pure function of [`SceneConfig`]. Randomness comes from
//! ChaCha20 (`rand_chacha::ChaCha20Rng`) seeded with `seed_from_u64(seed)`;
//! each concern draws from its own stream (`set_stream`) so that changing,
//! say, the descriptor noise does not move any point:
//!
//! | stream | use |
//! |-------:|-----|
//! | 0 | random truth transform |
//! | 1 | tag centers, tag points, background points |
//! | 2 | binary descriptors |
//! | 3 | float descriptors |
//! | 4 | coordinate noise on the target cloud |
//! | 5 | query descriptor corruption |
//! | 6 | colors and distractor queries |
//!
//! Gaussian samples use the Box–Muller transform on two `f64` draws.
//! Float descriptor components are rounded to `f32` so the scene survives a
//! round trip through 32-bit archives unchanged.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
#[cfg(feature = "serde")]
use serde::{Deserialize, Serialize};

use crate::cloud::{CloudError, CloudLabel, DescribedCloud, Descriptors, TagFeatureSet};
use crate::geometry::{
    axis_angle_rotation, centroid, hamming_distance, l2_distance, rotation_angle, BinaryDescriptor,
    FloatDescriptor, GeometryError, HomogeneousTransform, Point3, SimilarityTransform,
    BINARY_DESCRIPTOR_BITS, BINARY_DESCRIPTOR_BYTES,
};

/// Minimum Hamming distance (bits) between a tag descriptor and any other
/// binary descriptor in the scene.
pub const BINARY_MARGIN_BITS: u32 = 100;
/// Minimum L2 distance between a tag descriptor and any other float
/// descriptor (three times the default absolute gate).
pub const FLOAT_MARGIN: f64 = 3.0;
/// Tolerance on `|M − sR|` (relative to `s`) for a linear block to count as a
/// similarity.
pub const SIMILARITY_TOLERANCE: f64 = 1e-6;

const STREAM_TRUTH: u64 = 0;
const STREAM_GEOMETRY: u64 = 1;
const STREAM_BINARY: u64 = 2;
const STREAM_FLOAT: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_CORRUPTION: u64 = 5;
const STREAM_EXTRAS: u64 = 6;

const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scene configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Cloud(#[from] CloudError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("recovered transform is not a similarity (max deviation {0:e})")]
    NotASimilarity(f64),
    #[error("truth transform is not a similarity")]
    TruthNotASimilarity,
}

/// Ground-truth transform from the source (SLAM) to the target (SfM) cloud.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum TruthSpec {
    /// Scale uniform in `[scale_min, scale_max]`, uniformly random rotation,
    /// translation uniform in `[-translation_max, translation_max]³`.
    RandomSimilarity {
        scale_min: f64,
        scale_max: f64,
        translation_max: f64,
    },
    Similarity {
        scale: f64,
        axis: [f64; 3],
        angle_rad: f64,
        translation: [f64; 3],
    },
    /// Top three rows of an affine matrix.
    Affine { rows: [[f64; 4]; 3] },
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec::RandomSimilarity {
            scale_min: 0.5,
            scale_max: 2.0,
            translation_max: 1.0,
        }
    }
}

/// Parameters of a synthetic scene.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SceneConfig {
    pub seed: u64,
    pub n_background_points: usize,
    pub n_tags: usize,
    pub points_per_tag: usize,
    /// Standard deviation of tag points around their tag center.
    pub tag_spatial_sigma: f64,
    /// Minimum distance between tag centers in the source cloud.
    pub tag_separation: f64,
    /// Source points lie in `[-extent, extent]³`.
    pub extent: f64,
    pub truth: TruthSpec,
    /// Per-axis Gaussian noise added to target coordinates.
    pub coord_noise_sigma: f64,
    /// Bits flipped in each binary query descriptor.
    pub descriptor_flip_bits: u32,
    /// Per-component Gaussian noise on each float query descriptor.
    pub descriptor_noise_sigma: f64,
    pub float_dimension: usize,
    /// Extra queries per tag, as a fraction of `points_per_tag`, copied from
    /// random background descriptors.
    pub distractor_fraction: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_background_points: 10_000,
            n_tags: 6,
            points_per_tag: 8,
            tag_spatial_sigma: 0.005,
            tag_separation: 0.4,
            extent: 1.0,
            truth: TruthSpec::default(),
            coord_noise_sigma: 0.0,
            descriptor_flip_bits: 0,
            descriptor_noise_sigma: 0.0,
            float_dimension: crate::geometry::DEFAULT_FLOAT_DIMENSION,
            distractor_fraction: 0.0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::ConfigInvalid(m.into()));
        if self.n_tags < 4 {
            return bad("n_tags must be at least 4");
        }
        if self.points_per_tag < 4 {
            return bad("points_per_tag must be at least 4");
        }
        let sigmas = [
            self.tag_spatial_sigma,
            self.coord_noise_sigma,
            self.descriptor_noise_sigma,
            self.tag_separation,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("sigmas and separation must be finite and nonnegative");
        }
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad("extent must be positive");
        }
        if self.descriptor_flip_bits as usize > BINARY_DESCRIPTOR_BITS {
            return bad("descriptor_flip_bits exceeds descriptor length");
        }
        if self.float_dimension == 0 {
            return bad("float_dimension must be positive");
        }
        if !(0.0..=1.0).contains(&self.distractor_fraction) {
            return bad("distractor_fraction must lie in [0, 1]");
        }
        if let TruthSpec::RandomSimilarity {
            scale_min,
            scale_max,
            translation_max,
        } = self.truth
        {
            if !(scale_min > 0.0 && scale_max >= scale_min && translation_max >= 0.0) {
                return bad("random truth needs 0 < scale_min <= scale_max and translation_max >= 0");
            }
        }
        Ok(())
    }
}

/// The ground truth of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub transform: HomogeneousTransform,
    pub similarity: Option<SimilarityTransform>,
}

/// Where one tag was planted.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTag {
    pub tag_id: String,
    /// Indices of the tag's points (same in both clouds).
    pub point_indices: Vec<usize>,
    /// Centroid of the tag points in the source cloud.
    pub source_centroid: Point3,
    /// Centroid of the tag points in the target cloud.
    pub target_centroid: Point3,
}

/// Output of [`generate_scene`]. The source cloud is the binary-descriptor
/// SLAM cloud, the target the float-descriptor SfM cloud; point `i` of one is
/// point `i` of the other.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub config: SceneConfig,
    pub source: DescribedCloud,
    pub target: DescribedCloud,
    pub source_tags: Vec<TagFeatureSet>,
    pub target_tags: Vec<TagFeatureSet>,
    /// Per-point colors of the target cloud.
    pub target_colors: Vec<[u8; 3]>,
    pub truth: Truth,
    pub planted: Vec<PlantedTag>,
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Standard normal sample (Box–Muller).
fn gaussian(rng: &mut ChaCha20Rng) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn random_rotation(rng: &mut ChaCha20Rng) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(gaussian(rng), gaussian(rng), gaussian(rng), gaussian(rng));
        if q.norm() > 1e-6 {
            return UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}

fn build_truth(spec: &TruthSpec, seed: u64) -> Result<Truth, SynthError> {
    let similarity = match *spec {
        TruthSpec::RandomSimilarity {
            scale_min,
            scale_max,
            translation_max,
        } => {
            let mut rng = stream(seed, STREAM_TRUTH);
            let scale = uniform(&mut rng, scale_min, scale_max);
            let rotation = random_rotation(&mut rng);
            let t = Vector3::from_fn(|_, _| uniform(&mut rng, -translation_max, translation_max));
            SimilarityTransform::new(scale, rotation, t)?
        }
        TruthSpec::Similarity {
            scale,
            axis,
            angle_rad,
            translation,
        } => SimilarityTransform::new(
            scale,
            axis_angle_rotation(axis, angle_rad),
            Vector3::from(translation),
        )?,
        TruthSpec::Affine { rows } => {
            let transform = HomogeneousTransform::from_affine_rows(rows)?;
            return Ok(Truth {
                similarity: decompose_similarity(&transform, SIMILARITY_TOLERANCE),
                transform,
            });
        }
    };
    Ok(Truth {
        transform: similarity.to_homogeneous(),
        similarity: Some(similarity),
    })
}

fn random_binary(rng: &mut ChaCha20Rng) -> BinaryDescriptor {
    let mut bytes = [0u8; BINARY_DESCRIPTOR_BYTES];
    rng.fill(&mut bytes[..]);
    BinaryDescriptor::from_bytes(bytes)
}

fn random_float(rng: &mut ChaCha20Rng, dim: usize) -> FloatDescriptor {
    let v = (0..dim).map(|_| f64::from(rng.random::<f64>() as f32)).collect();
    FloatDescriptor::new(v).expect("finite")
}

fn far_from_binary(d: &BinaryDescriptor, others: &[BinaryDescriptor]) -> bool {
    others.iter().all(|o| hamming_distance(d, o) >= BINARY_MARGIN_BITS)
}

fn far_from_float(d: &FloatDescriptor, others: &[FloatDescriptor]) -> bool {
    others
        .iter()
        .all(|o| l2_distance(d, o).map_or(false, |x| x >= FLOAT_MARGIN))
}

fn rejection<T>(
    mut draw: impl FnMut() -> T,
    accept: impl Fn(&T) -> bool,
    what: &str,
) -> Result<T, SynthError> {
    for _ in 0..MAX_REJECTIONS {
        let d = draw();
        if accept(&d) {
            return Ok(d);
        }
    }
    Err(SynthError::ConfigInvalid(format!("could not sample {what} with the required margin")))
}

/// Smallest-to-largest principal extent ratio of a point set (0 when planar).
fn planarity(points: &[Point3]) -> f64 {
    let c = centroid(points).map(Point3::to_vector).unwrap_or_default();
    let scatter = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.to_vector() - c;
        acc + d * d.transpose()
    });
    let sv = scatter.singular_values();
    if sv[0] > 0.0 {
        libm::sqrt(sv[2] / sv[0])
    } else {
        0.0
    }
}

/// Builds a scene from `cfg`. Identical configs give identical scenes.
pub fn generate_scene(cfg: &SceneConfig) -> Result<Scene, SynthError> {
    cfg.validate()?;
    let truth = build_truth(&cfg.truth, cfg.seed)?;
    let ext = cfg.extent;

    // geometry: tag centers (well separated, not coplanar), tag points, background
    let mut geo = stream(cfg.seed, STREAM_GEOMETRY);
    let centers = rejection(
        || {
            let mut centers: Vec<Point3> = Vec::with_capacity(cfg.n_tags);
            let mut attempts = 0;
            while centers.len() < cfg.n_tags && attempts < MAX_REJECTIONS {
                attempts += 1;
                let margin = 0.8 * ext;
                let c = Point3::new(
                    uniform(&mut geo, -margin, margin),
                    uniform(&mut geo, -margin, margin),
                    uniform(&mut geo, -margin, margin),
                );
                if centers.iter().all(|o| o.distance(&c) >= cfg.tag_separation) {
                    centers.push(c);
                }
            }
            centers
        },
        |c| c.len() == cfg.n_tags && planarity(c) > 0.05,
        "tag centers",
    )?;

    let mut points = Vec::new();
    let mut planted = Vec::with_capacity(cfg.n_tags);
    for (t, c) in centers.iter().enumerate() {
        let start = points.len();
        for _ in 0..cfg.points_per_tag {
            points.push(Point3::new(
                c.x + cfg.tag_spatial_sigma * gaussian(&mut geo),
                c.y + cfg.tag_spatial_sigma * gaussian(&mut geo),
                c.z + cfg.tag_spatial_sigma * gaussian(&mut geo),
            ));
        }
        planted.push(PlantedTag {
            tag_id: format!("tag{t}"),
            point_indices: (start..points.len()).collect(),
            source_centroid: Point3::ORIGIN,
            target_centroid: Point3::ORIGIN,
        });
    }
    let n_tag_points = points.len();
    for _ in 0..cfg.n_background_points {
        points.push(Point3::new(
            uniform(&mut geo, -ext, ext),
            uniform(&mut geo, -ext, ext),
            uniform(&mut geo, -ext, ext),
        ));
    }

    let mut noise = stream(cfg.seed, STREAM_NOISE);
    let target_points: Vec<Point3> = points
        .iter()
        .map(|p| {
            let q = truth.transform.apply(p);
            if cfg.coord_noise_sigma > 0.0 {
                Point3::new(
                    q.x + cfg.coord_noise_sigma * gaussian(&mut noise),
                    q.y + cfg.coord_noise_sigma * gaussian(&mut noise),
                    q.z + cfg.coord_noise_sigma * gaussian(&mut noise),
                )
            } else {
                q
            }
        })
        .collect();

    for tag in &mut planted {
        let src: Vec<Point3> = tag.point_indices.iter().map(|&i| points[i]).collect();
        let dst: Vec<Point3> = tag.point_indices.iter().map(|&i| target_points[i]).collect();
        tag.source_centroid = centroid(&src)?;
        tag.target_centroid = centroid(&dst)?;
    }

    // descriptors: tag descriptors first, then background rejection-sampled away from them
    let mut brng = stream(cfg.seed, STREAM_BINARY);
    let mut binary: Vec<BinaryDescriptor> = Vec::with_capacity(points.len());
    for _ in 0..n_tag_points {
        let d = rejection(|| random_binary(&mut brng), |d| far_from_binary(d, &binary), "binary tag descriptor")?;
        binary.push(d);
    }
    for _ in n_tag_points..points.len() {
        let tags = &binary[..n_tag_points];
        let d = rejection(|| random_binary(&mut brng), |d| far_from_binary(d, tags), "binary descriptor")?;
        binary.push(d);
    }

    let dim = cfg.float_dimension;
    let mut frng = stream(cfg.seed, STREAM_FLOAT);
    let mut float: Vec<FloatDescriptor> = Vec::with_capacity(points.len());
    for _ in 0..n_tag_points {
        let d = rejection(|| random_float(&mut frng, dim), |d| far_from_float(d, &float), "float tag descriptor")?;
        float.push(d);
    }
    for _ in n_tag_points..points.len() {
        let tags = &float[..n_tag_points];
        let d = rejection(|| random_float(&mut frng, dim), |d| far_from_float(d, tags), "float descriptor")?;
        float.push(d);
    }

    // queries: corrupted copies of each tag point's descriptors, plus distractors
    let mut corrupt = stream(cfg.seed, STREAM_CORRUPTION);
    let mut extras = stream(cfg.seed, STREAM_EXTRAS);
    let n_distractors = libm::round(cfg.distractor_fraction * cfg.points_per_tag as f64) as usize;
    let mut source_tags = Vec::with_capacity(cfg.n_tags);
    let mut target_tags = Vec::with_capacity(cfg.n_tags);
    for tag in &planted {
        let mut qa: Vec<BinaryDescriptor> = Vec::new();
        let mut qb: Vec<FloatDescriptor> = Vec::new();
        for &i in &tag.point_indices {
            qa.push(flip_random_bits(binary[i], cfg.descriptor_flip_bits, &mut corrupt));
            qb.push(perturb(&float[i], cfg.descriptor_noise_sigma, &mut corrupt));
        }
        if cfg.n_background_points > 0 {
            for _ in 0..n_distractors {
                let j = n_tag_points + extras.random_range(0..cfg.n_background_points);
                qa.push(binary[j]);
                qb.push(float[j].clone());
            }
        }
        source_tags.push(TagFeatureSet::new(tag.tag_id.clone(), Descriptors::Binary(qa))?);
        target_tags.push(TagFeatureSet::new(tag.tag_id.clone(), Descriptors::Float(qb))?);
    }

    let target_colors = (0..points.len())
        .map(|_| {
            let mut c = [0u8; 3];
            extras.fill(&mut c[..]);
            c
        })
        .collect();

    Ok(Scene {
        config: cfg.clone(),
        source: DescribedCloud::with_single_descriptors(CloudLabel::Slam, points, Descriptors::Binary(binary))?,
        target: DescribedCloud::with_single_descriptors(
            CloudLabel::Sfm,
            target_points,
            Descriptors::Float(float),
        )?,
        source_tags,
        target_tags,
        target_colors,
        truth,
        planted,
    })
}

fn flip_random_bits(d: BinaryDescriptor, count: u32, rng: &mut ChaCha20Rng) -> BinaryDescriptor {
    // partial Fisher–Yates over bit positions
    let mut positions: Vec<usize> = (0..BINARY_DESCRIPTOR_BITS).collect();
    let mut out = d;
    for k in 0..count as usize {
        let j = rng.random_range(k..BINARY_DESCRIPTOR_BITS);
        positions.swap(k, j);
        out = out.with_bit_flipped(positions[k]);
    }
    out
}

fn perturb(d: &FloatDescriptor, sigma: f64, rng: &mut ChaCha20Rng) -> FloatDescriptor {
    if sigma == 0.0 {
        return d.clone();
    }
    let v = d
        .values()
        .iter()
        .map(|x| f64::from((x + sigma * gaussian(rng)) as f32))
        .collect();
    FloatDescriptor::new(v).expect("finite")
}

/// Splits `h` into `s·R` and `t` when its linear block is a scaled rotation
/// within `tol` (max-entry deviation relative to `s`).
pub fn decompose_similarity(h: &HomogeneousTransform, tol: f64) -> Option<SimilarityTransform> {
    let (sim, deviation) = nearest_similarity(h)?;
    (deviation <= tol).then_some(sim)
}

/// Closest scaled rotation to the linear block and its relative deviation.
fn nearest_similarity(h: &HomogeneousTransform) -> Option<(SimilarityTransform, f64)> {
    let m = h.linear_part();
    if m.determinant() <= 0.0 {
        return None;
    }
    let svd = m.svd(true, true);
    let rotation = svd.u? * svd.v_t?;
    let scale = svd.singular_values.mean();
    let deviation = (m - rotation * scale).amax() / scale;
    let sim = SimilarityTransform::new(scale, rotation, h.translation_part()).ok()?;
    Some((sim, deviation))
}

/// How [`evaluate`] treats rotation and scale metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMode {
    /// Fail with [`EvalError::NotASimilarity`] when the recovered transform
    /// has no similarity decomposition.
    Similarity,
    /// Report rotation and scale only when both transforms decompose.
    Auto,
}

/// Recovery error of a transform against the truth.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(Serialize, Deserialize))]
pub struct EvalMetrics {
    pub rotation_error_rad: Option<f64>,
    pub scale_error_rel: Option<f64>,
    pub translation_error: f64,
    /// Largest entry-wise difference of the 4×4 matrices.
    pub max_entry_error: f64,
    /// RMS over `tag_sites` of the distance between the recovered and true
    /// images of each site.
    pub tag_centroid_rmse: f64,
    pub tags_recovered: usize,
    pub tags_expected: usize,
}

/// Scores `recovered` against `truth`.
///
/// `tag_sites` are the true source-cloud centroids of the tags that were
/// localized and used for alignment.
pub fn evaluate(
    recovered: &HomogeneousTransform,
    truth: &Truth,
    tag_sites: &[Point3],
    tags_expected: usize,
    mode: MetricMode,
) -> Result<EvalMetrics, EvalError> {
    let rec_sim = nearest_similarity(recovered);
    let rec_sim = match (mode, rec_sim) {
        (_, Some((sim, dev))) if dev <= SIMILARITY_TOLERANCE => Some(sim),
        (MetricMode::Similarity, Some((_, dev))) => return Err(EvalError::NotASimilarity(dev)),
        (MetricMode::Similarity, None) => return Err(EvalError::NotASimilarity(f64::INFINITY)),
        (MetricMode::Auto, _) => None,
    };
    let (rotation_error_rad, scale_error_rel) = match (rec_sim, truth.similarity) {
        (Some(r), Some(t)) => (
            Some(rotation_angle(&(r.rotation() * t.rotation().transpose()))),
            Some((r.scale() / t.scale() - 1.0).abs()),
        ),
        (Some(_), None) if mode == MetricMode::Similarity => return Err(EvalError::TruthNotASimilarity),
        _ => (None, None),
    };
    let translation_error = (recovered.translation_part() - truth.transform.translation_part()).norm();
    let max_entry_error = recovered.max_abs_diff(&truth.transform);
    let tag_centroid_rmse = if tag_sites.is_empty() {
        0.0
    } else {
        let ss: f64 = tag_sites
            .iter()
            .map(|p| recovered.apply(p).distance_squared(&truth.transform.apply(p)))
            .sum();
        libm::sqrt(ss / tag_sites.len() as f64)
    };
    Ok(EvalMetrics {
        rotation_error_rad,
        scale_error_rel,
        translation_error,
        max_entry_error,
        tag_centroid_rmse,
        tags_recovered: tag_sites.len(),
        tags_expected,
    })
}
