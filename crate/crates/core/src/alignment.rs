//! Cloud-to-cloud transform estimation from tag correspondences.
//!
//! Two estimators are provided:
//!
//! * [`solve_dlt`]: the affine `X' = H X` recast as a homogeneous system
//!   `A h = 0` with 13 unknowns (the 12 affine entries plus a homogeneous
//!   slack), solved by the right-singular vector of the smallest singular
//!   value. Coordinates are conditioned (centered, scaled to RMS norm √3)
//!   before the SVD and the result is mapped back.
//! * [`estimate_similarity`]: closed-form least-squares scale, rotation and
//!   translation from the SVD of the centered cross-covariance.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Vector3};

use crate::geometry::{
    GeometryError, HomogeneousTransform, Point3, PointCloud, SimilarityTransform,
};

/// Minimum correspondences for the affine DLT.
pub const MIN_DLT_CORRESPONDENCES: usize = 4;
/// Minimum correspondences for the similarity estimator.
pub const MIN_SIMILARITY_CORRESPONDENCES: usize = 3;
/// Number of DLT unknowns.
pub const DLT_UNKNOWNS: usize = 13;
/// Relative gap between the two smallest singular values below which the
/// DLT null space is considered non-unique.
pub const DLT_GAP_TOLERANCE: f64 = 1e-9;
/// Minimum magnitude of the homogeneous slack of the unit null vector.
pub const DLT_SLACK_TOLERANCE: f64 = 1e-9;
/// Ratio of second to first principal extent below which a point set counts
/// as collinear.
pub const COLLINEAR_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("{found} correspondences, at least {required} required")]
    TooFewCorrespondences { found: usize, required: usize },
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(&'static str),
    #[error("duplicate tag id `{0}` in correspondences")]
    DuplicateTag(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub tag_id: String,
    /// Position in the source cloud.
    pub source: Point3,
    /// Position in the target cloud.
    pub target: Point3,
}

/// Tag correspondences with unique ids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CorrespondenceSet(Vec<Correspondence>);

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Result<Self, AlignError> {
        let mut seen = BTreeSet::new();
        for p in &pairs {
            if !seen.insert(p.tag_id.as_str()) {
                return Err(AlignError::DuplicateTag(p.tag_id.clone()));
            }
            if !p.source.is_finite() || !p.target.is_finite() {
                return Err(GeometryError::NonFinite("correspondence").into());
            }
        }
        Ok(Self(pairs))
    }

    /// Correspondences named `tag0`, `tag1`, ...
    pub fn from_points(source: &[Point3], target: &[Point3]) -> Result<Self, AlignError> {
        Self::new(
            source
                .iter()
                .zip(target)
                .enumerate()
                .map(|(i, (s, t))| Correspondence {
                    tag_id: alloc::format!("tag{i}"),
                    source: *s,
                    target: *t,
                })
                .collect(),
        )
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn sources(&self) -> impl Iterator<Item = Point3> + '_ {
        self.0.iter().map(|c| c.source)
    }

    fn targets(&self) -> impl Iterator<Item = Point3> + '_ {
        self.0.iter().map(|c| c.target)
    }
}

/// Coordinate conditioning applied when assembling the DLT system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Conditioning {
    /// Raw coordinates.
    None,
    /// Center on the centroid and scale to RMS distance √3.
    #[default]
    Normalized,
}

/// The stacked `3n × 13` DLT matrix with the conditioning used to build it.
#[derive(Debug, Clone)]
pub struct DltSystem {
    pub matrix: DMatrix<f64>,
    /// Maps raw source coordinates into the conditioned frame.
    pub source_normalizer: HomogeneousTransform,
    /// Maps raw target coordinates into the conditioned frame.
    pub target_normalizer: HomogeneousTransform,
    pub correspondences: CorrespondenceSet,
}

impl DltSystem {
    /// The unknown vector `[vec(H'); 1]` corresponding to a raw-frame
    /// transform, where `H'` is `h` expressed in the conditioned frames.
    pub fn unknown_for(&self, h: &HomogeneousTransform) -> DVector<f64> {
        let src_inv = self
            .source_normalizer
            .inverse()
            .expect("normalizers are invertible");
        let conditioned = self.target_normalizer.compose(h).compose(&src_inv);
        let m = conditioned.matrix();
        let mut v = DVector::zeros(DLT_UNKNOWNS);
        for r in 0..3 {
            for c in 0..4 {
                v[4 * r + c] = m[(r, c)];
            }
        }
        v[12] = 1.0;
        v
    }
}

fn normalizer(points: impl Iterator<Item = Point3>) -> Result<HomogeneousTransform, AlignError> {
    let pts: Vec<Point3> = points.collect();
    let c = crate::geometry::centroid(&pts)?;
    let mean_sq = pts.iter().map(|p| p.distance_squared(&c)).sum::<f64>() / pts.len() as f64;
    if mean_sq <= 0.0 {
        return Err(AlignError::DegenerateConfiguration("all points coincide"));
    }
    let k = libm::sqrt(3.0 / mean_sq);
    Ok(HomogeneousTransform::from_affine_rows([
        [k, 0.0, 0.0, -k * c.x],
        [0.0, k, 0.0, -k * c.y],
        [0.0, 0.0, k, -k * c.z],
    ])?)
}

/// Assembles the conditioned DLT system.
pub fn build_dlt_system(c: &CorrespondenceSet) -> Result<DltSystem, AlignError> {
    build_dlt_system_with(c, Conditioning::Normalized)
}

/// Assembles `A` with rows `[X 1] · H_r − x'_r · h₁₃ = 0` for each pair and
/// coordinate `r`, so `A [vec(H); 1] = 0` exactly when every `X' = H X`.
pub fn build_dlt_system_with(
    c: &CorrespondenceSet,
    conditioning: Conditioning,
) -> Result<DltSystem, AlignError> {
    if c.len() < MIN_DLT_CORRESPONDENCES {
        return Err(AlignError::TooFewCorrespondences {
            found: c.len(),
            required: MIN_DLT_CORRESPONDENCES,
        });
    }
    let (source_normalizer, target_normalizer) = match conditioning {
        Conditioning::None => (HomogeneousTransform::identity(), HomogeneousTransform::identity()),
        Conditioning::Normalized => (normalizer(c.sources())?, normalizer(c.targets())?),
    };
    let mut a = DMatrix::zeros(3 * c.len(), DLT_UNKNOWNS);
    for (i, pair) in c.pairs().iter().enumerate() {
        let x = source_normalizer.apply(&pair.source).to_array();
        let xp = target_normalizer.apply(&pair.target).to_array();
        for r in 0..3 {
            let row = 3 * i + r;
            for k in 0..3 {
                a[(row, 4 * r + k)] = x[k];
            }
            a[(row, 4 * r + 3)] = 1.0;
            a[(row, 12)] = -xp[r];
        }
    }
    Ok(DltSystem {
        matrix: a,
        source_normalizer,
        target_normalizer,
        correspondences: c.clone(),
    })
}

/// Per-tag alignment residuals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Residuals {
    /// `(tag_id, |H X − X'|)` in correspondence order.
    pub per_tag: Vec<(String, f64)>,
    pub rmse: f64,
}

pub fn alignment_residuals(h: &HomogeneousTransform, c: &CorrespondenceSet) -> Residuals {
    let per_tag: Vec<(String, f64)> = c
        .pairs()
        .iter()
        .map(|p| (p.tag_id.clone(), h.apply(&p.source).distance(&p.target)))
        .collect();
    let rmse = if per_tag.is_empty() {
        0.0
    } else {
        libm::sqrt(per_tag.iter().map(|(_, r)| r * r).sum::<f64>() / per_tag.len() as f64)
    };
    Residuals { per_tag, rmse }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DltSolution {
    pub transform: HomogeneousTransform,
    /// All 13 singular values of the (conditioned) system, descending.
    pub singular_values: Vec<f64>,
    pub residuals: Residuals,
}

impl DltSolution {
    pub fn rmse(&self) -> f64 {
        self.residuals.rmse
    }
}

/// Solves the DLT system by SVD.
pub fn solve_dlt(system: &DltSystem) -> Result<DltSolution, AlignError> {
    let a = &system.matrix;
    // zero rows leave the right-singular vectors unchanged but make the SVD
    // return a full 13×13 V when there are fewer equations than unknowns
    let rows = a.nrows().max(DLT_UNKNOWNS);
    let mut padded = DMatrix::zeros(rows, DLT_UNKNOWNS);
    padded.view_mut((0, 0), (a.nrows(), DLT_UNKNOWNS)).copy_from(a);

    let svd = nalgebra::linalg::SVD::try_new(padded, false, true, f64::EPSILON, 0)
        .ok_or(AlignError::DegenerateConfiguration("SVD did not converge"))?;
    let v_t = svd
        .v_t
        .as_ref()
        .ok_or(AlignError::DegenerateConfiguration("SVD returned no V"))?;
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();

    let largest = sv[0];
    if !(largest > 0.0) {
        return Err(AlignError::DegenerateConfiguration("zero system matrix"));
    }
    let gap = (sv[DLT_UNKNOWNS - 2] - sv[DLT_UNKNOWNS - 1]) / largest;
    if gap < DLT_GAP_TOLERANCE {
        return Err(AlignError::DegenerateConfiguration(
            "null space is not one-dimensional (coplanar tags?)",
        ));
    }
    let h = v_t.row(DLT_UNKNOWNS - 1);
    let slack = h[12];
    if slack.abs() < DLT_SLACK_TOLERANCE {
        return Err(AlignError::DegenerateConfiguration("homogeneous slack vanishes"));
    }

    let mut conditioned = Matrix4::identity();
    for r in 0..3 {
        for c in 0..4 {
            conditioned[(r, c)] = h[4 * r + c] / slack;
        }
    }
    let target_inv = system
        .target_normalizer
        .inverse()
        .ok_or(AlignError::DegenerateConfiguration("target normalizer singular"))?;
    let mut m = target_inv.matrix() * conditioned * system.source_normalizer.matrix();
    m.fixed_view_mut::<1, 4>(3, 0).copy_from_slice(&[0.0, 0.0, 0.0, 1.0]);
    let transform = HomogeneousTransform::new(m)
        .map_err(|_| AlignError::DegenerateConfiguration("recovered linear part is singular"))?;

    let residuals = alignment_residuals(&transform, &system.correspondences);
    Ok(DltSolution {
        transform,
        singular_values: sv,
        residuals,
    })
}

/// Conditioned DLT in one call.
pub fn estimate_dlt(c: &CorrespondenceSet) -> Result<DltSolution, AlignError> {
    solve_dlt(&build_dlt_system(c)?)
}

fn demeaned(points: impl Iterator<Item = Point3>) -> (Vector3<f64>, Vec<Vector3<f64>>) {
    let pts: Vec<Vector3<f64>> = points.map(Point3::to_vector).collect();
    let mean = pts.iter().fold(Vector3::zeros(), |acc, p| acc + p) / pts.len() as f64;
    let centered = pts.iter().map(|p| p - mean).collect();
    (mean, centered)
}

fn check_not_collinear(centered: &[Vector3<f64>]) -> Result<(), AlignError> {
    let scatter = centered.iter().fold(Matrix3::zeros(), |acc, p| acc + p * p.transpose());
    let ev = scatter.singular_values();
    // singular values of the scatter are squared principal extents
    let (first, second) = (ev[0], ev[1]);
    if !(first > 0.0) {
        return Err(AlignError::DegenerateConfiguration("points coincide"));
    }
    if libm::sqrt(second / first) < COLLINEAR_TOLERANCE {
        return Err(AlignError::DegenerateConfiguration("points are collinear"));
    }
    Ok(())
}

/// Least-squares similarity minimizing `Σ |s R Xᵢ + t − X'ᵢ|²`, with
/// `det R = +1` enforced.
pub fn estimate_similarity(c: &CorrespondenceSet) -> Result<SimilarityTransform, AlignError> {
    if c.len() < MIN_SIMILARITY_CORRESPONDENCES {
        return Err(AlignError::TooFewCorrespondences {
            found: c.len(),
            required: MIN_SIMILARITY_CORRESPONDENCES,
        });
    }
    let n = c.len() as f64;
    let (src_mean, src) = demeaned(c.sources());
    let (dst_mean, dst) = demeaned(c.targets());
    check_not_collinear(&src)?;
    check_not_collinear(&dst)?;

    let src_var = src.iter().map(|p| p.norm_squared()).sum::<f64>() / n;
    let cov = src
        .iter()
        .zip(&dst)
        .fold(Matrix3::zeros(), |acc, (x, y)| acc + y * x.transpose())
        / n;
    let svd = nalgebra::linalg::SVD::try_new(cov, true, true, f64::EPSILON, 0)
        .ok_or(AlignError::DegenerateConfiguration("SVD did not converge"))?;
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(AlignError::DegenerateConfiguration("SVD returned no factors")),
    };
    let d = svd.singular_values;
    let sign = if u.determinant() * v_t.determinant() < 0.0 { -1.0 } else { 1.0 };
    let s_diag = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign));
    let rotation = u * s_diag * v_t;
    let scale = (d[0] + d[1] + sign * d[2]) / src_var;
    if !(scale > 0.0) {
        return Err(AlignError::DegenerateConfiguration("non-positive scale"));
    }
    let translation = dst_mean - rotation * src_mean * scale;
    Ok(SimilarityTransform::new(scale, rotation, translation)?)
}

/// Maps every point through `h`; colors are kept.
pub fn transform_cloud(cloud: &PointCloud, h: &HomogeneousTransform) -> PointCloud {
    let points = cloud.points().iter().map(|p| h.apply(p)).collect();
    PointCloud::new(points, cloud.colors().map(<[_]>::to_vec))
        .expect("color count unchanged")
}

/// Which estimator produced a transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlignmentMethod {
    #[default]
    Dlt,
    Similarity,
}

impl AlignmentMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AlignmentMethod::Dlt => "dlt",
            AlignmentMethod::Similarity => "similarity",
        }
    }
}

/// Outcome of [`align`] with either estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub method: AlignmentMethod,
    pub transform: HomogeneousTransform,
    /// Present for the DLT only.
    pub singular_values: Option<Vec<f64>>,
    pub residuals: Residuals,
}

/// Estimates the transform with `method`. Both estimators require at least
/// four correspondences here.
pub fn align(c: &CorrespondenceSet, method: AlignmentMethod) -> Result<Alignment, AlignError> {
    if c.len() < MIN_DLT_CORRESPONDENCES {
        return Err(AlignError::TooFewCorrespondences {
            found: c.len(),
            required: MIN_DLT_CORRESPONDENCES,
        });
    }
    match method {
        AlignmentMethod::Dlt => {
            let sol = estimate_dlt(c)?;
            Ok(Alignment {
                method,
                transform: sol.transform,
                singular_values: Some(sol.singular_values),
                residuals: sol.residuals,
            })
        }
        AlignmentMethod::Similarity => {
            let transform = estimate_similarity(c)?.to_homogeneous();
            Ok(Alignment {
                method,
                transform,
                singular_values: None,
                residuals: alignment_residuals(&transform, c),
            })
        }
    }
}
